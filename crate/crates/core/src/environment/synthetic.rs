use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Environment, Evaluation};
use crate::error::{Error, Result};
use crate::gp::PruningPolicy;
use crate::layer_model::NetworkDescriptor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interaction {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

fn default_noise() -> f64 {
    0.002
}

/// Analytic stand-in for "accuracy after pruning":
/// `a0 - sum s_i (1 - p_i)^g_i - sum w_ij (1 - p_i)(1 - p_j) + noise`,
/// clamped to `[0, 1]`.
///
/// The noise is a pure function of `(seed, policy)`, so repeated evaluations
/// of one policy agree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEnvSpec {
    pub base_accuracy: f64,
    pub sensitivity: Vec<f64>,
    pub exponent: Vec<f64>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticEnvSpec {
    pub fn dim(&self) -> usize {
        self.sensitivity.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.base_accuracy > 0.0 && self.base_accuracy < 1.0) {
            return bad(format!(
                "base_accuracy {} is outside (0, 1)",
                self.base_accuracy
            ));
        }
        if self.exponent.len() != self.dim() {
            return bad(format!(
                "{} sensitivities but {} exponents",
                self.dim(),
                self.exponent.len()
            ));
        }
        if let Some(s) = self
            .sensitivity
            .iter()
            .find(|s| !(**s >= 0.0 && s.is_finite()))
        {
            return bad(format!("sensitivity {s} must be finite and non-negative"));
        }
        if let Some(g) = self
            .exponent
            .iter()
            .find(|g| !(**g >= 1.0 && g.is_finite()))
        {
            return bad(format!("exponent {g} must be finite and at least 1"));
        }
        for t in &self.interactions {
            if t.i >= self.dim() || t.j >= self.dim() || !t.weight.is_finite() {
                return bad(format!("invalid interaction {t:?}"));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!(
                "noise {} must be finite and non-negative",
                self.noise
            ));
        }
        Ok(())
    }

    /// Objective without noise or clamping.
    pub fn mean_objective(&self, policy: &[f64]) -> f64 {
        let mut f = self.base_accuracy;
        for ((p, s), g) in policy.iter().zip(&self.sensitivity).zip(&self.exponent) {
            f -= s * (1.0 - p).powf(*g);
        }
        for t in &self.interactions {
            f -= t.weight * (1.0 - policy[t.i]) * (1.0 - policy[t.j]);
        }
        f
    }

    /// Standard normal draw attached to `policy`.
    pub fn noise_draw(&self, policy: &[f64]) -> f64 {
        let mut h = mix(self.seed ^ 0x6a09_e667_f3bc_c909);
        for v in policy {
            h = mix(h ^ v.to_bits());
        }
        ChaCha8Rng::seed_from_u64(h).sample(StandardNormal)
    }

    pub fn objective(&self, policy: &[f64]) -> Result<f64> {
        if policy.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: policy.len(),
            });
        }
        let mut f = self.mean_objective(policy);
        if self.noise > 0.0 {
            f += self.noise * self.noise_draw(policy);
        }
        Ok(f.clamp(0.0, 1.0))
    }

    /// Sensitivities and exponents shared by group up to relative `jitter`;
    /// `groups[i]` is the group of layer `i`.
    pub fn block_correlated(groups: &[usize], config: &GeneratorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = groups.iter().max().map_or(0, |m| m + 1);
        let shared: Vec<(f64, f64)> = (0..count)
            .map(|_| {
                (
                    config.draw_sensitivity(&mut rng),
                    config.draw_exponent(&mut rng),
                )
            })
            .collect();
        let mut sensitivity = Vec::with_capacity(groups.len());
        let mut exponent = Vec::with_capacity(groups.len());
        for &g in groups {
            let (s, e) = shared[g];
            sensitivity.push(s * (1.0 + config.jitter * rng.gen_range(-1.0..=1.0)));
            exponent.push((e * (1.0 + config.jitter * rng.gen_range(-1.0..=1.0))).max(1.0));
        }
        let interactions = config.draw_interactions(groups.len(), &mut rng);
        config.finish(sensitivity, exponent, interactions, seed)
    }

    /// Sensitivities and exponents drawn independently per layer.
    pub fn uncorrelated(dim: usize, config: &GeneratorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sensitivity = Vec::with_capacity(dim);
        let mut exponent = Vec::with_capacity(dim);
        for _ in 0..dim {
            sensitivity.push(config.draw_sensitivity(&mut rng));
            exponent.push(config.draw_exponent(&mut rng));
        }
        let interactions = config.draw_interactions(dim, &mut rng);
        config.finish(sensitivity, exponent, interactions, seed)
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Ranges for generated specs. Sensitivities are log-uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub base_accuracy: f64,
    pub sensitivity: (f64, f64),
    pub exponent: (f64, f64),
    /// Relative spread of per-layer values around their group's value.
    pub jitter: f64,
    pub interaction_pairs: usize,
    pub interaction_weight: (f64, f64),
    pub noise: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base_accuracy: 0.93,
            sensitivity: (0.005, 0.25),
            exponent: (1.5, 3.0),
            jitter: 0.1,
            interaction_pairs: 0,
            interaction_weight: (0.0, 0.01),
            noise: 0.002,
        }
    }
}

impl GeneratorConfig {
    fn draw_sensitivity(&self, rng: &mut ChaCha8Rng) -> f64 {
        let (lo, hi) = self.sensitivity;
        if lo >= hi {
            return lo;
        }
        (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp()
    }

    fn draw_exponent(&self, rng: &mut ChaCha8Rng) -> f64 {
        let (lo, hi) = self.exponent;
        if lo >= hi {
            lo
        } else {
            rng.gen_range(lo..hi)
        }
    }

    fn draw_interactions(&self, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Interaction> {
        if dim < 2 {
            return Vec::new();
        }
        let (lo, hi) = self.interaction_weight;
        (0..self.interaction_pairs)
            .map(|_| {
                let i = rng.gen_range(0..dim);
                let j = (i + rng.gen_range(1..dim)) % dim;
                let weight = if lo >= hi { lo } else { rng.gen_range(lo..hi) };
                Interaction {
                    i: i.min(j),
                    j: i.max(j),
                    weight,
                }
            })
            .collect()
    }

    fn finish(
        &self,
        sensitivity: Vec<f64>,
        exponent: Vec<f64>,
        interactions: Vec<Interaction>,
        seed: u64,
    ) -> SyntheticEnvSpec {
        SyntheticEnvSpec {
            base_accuracy: self.base_accuracy,
            sensitivity,
            exponent,
            interactions,
            noise: self.noise,
            seed,
        }
    }
}

/// [`SyntheticEnvSpec`] behind the [`Environment`] interface; the FLOPs ratio
/// comes from the network descriptor.
#[derive(Debug, Clone)]
pub struct SyntheticEnvironment {
    spec: SyntheticEnvSpec,
}

impl SyntheticEnvironment {
    pub fn new(spec: SyntheticEnvSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &SyntheticEnvSpec {
        &self.spec
    }
}

impl Environment for SyntheticEnvironment {
    fn evaluate(
        &mut self,
        net: &NetworkDescriptor,
        policy: &PruningPolicy,
        target: f64,
    ) -> Result<Evaluation> {
        if net.dimension() != self.spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.dim(),
                found: net.dimension(),
            });
        }
        let objective = self.spec.objective(policy.as_slice())?;
        let ratio = net.flops_ratio(policy.as_slice())?;
        Ok(Evaluation::new(objective, ratio, target))
    }
}
