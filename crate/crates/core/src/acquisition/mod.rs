//! Expected improvement and its maximization over a box of preservation
//! ratios.

mod joe_kuo;
mod sobol;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GaussianProcessModel, PruningPolicy};

pub use joe_kuo::MAX_DIMENSION as MAX_SOBOL_DIMENSION;
pub use sobol::{sobol_next, SobolStream};

/// Per-dimension box `[lo, hi]` with `0 < lo <= hi <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl SearchDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::InvalidDomain("zero-dimensional domain".into()));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(*l > 0.0 && l <= h && *h <= 1.0) {
                return Err(Error::InvalidDomain(format!(
                    "dimension {i}: [{l}, {h}] is not within (0, 1]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// `[floor, 1]^dim`.
    pub fn full(dim: usize, floor: f64) -> Result<Self> {
        Self::new(vec![floor; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| l <= v && v <= h)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, h)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }

    /// Affine map from the unit cube.
    pub fn map_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(u, (l, h))| (l + u * (h - l)).clamp(*l, *h))
            .collect()
    }
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Closed-form `E[max(f - best, 0)]` for `f ~ N(mean, sigma^2)`.
pub fn expected_improvement_from_moments(mean: f64, sigma: f64, best: f64) -> f64 {
    let gap = mean - best;
    if sigma < 1e-12 {
        return gap.max(0.0);
    }
    let z = gap / sigma;
    (gap * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

/// Expected improvement of the model's posterior at `query` over `best`.
pub fn expected_improvement(model: &GaussianProcessModel, query: &[f64], best: f64) -> Result<f64> {
    let (mean, var) = model.posterior(query)?;
    Ok(expected_improvement_from_moments(mean, var.sqrt(), best))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    /// Sobol candidates scored per maximization.
    pub candidates: usize,
    /// Best candidates refined by coordinate search.
    pub refine_starts: usize,
    /// Acquisition evaluations allowed per refined start.
    pub refine_evals: usize,
    /// Refinement stops once every coordinate step is below this fraction of
    /// the domain width.
    pub min_step: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            candidates: 1024,
            refine_starts: 8,
            refine_evals: 200,
            min_step: 1e-6,
        }
    }
}

/// Result of maximizing the acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionMaximum {
    /// The search point before the candidate map.
    pub proposal: Vec<f64>,
    /// The mapped point whose expected improvement is `value`.
    pub policy: PruningPolicy,
    pub value: f64,
}

struct Scorer<'a, F> {
    model: &'a GaussianProcessModel,
    best: f64,
    map: F,
    scratch: Vec<f64>,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> Result<Vec<f64>>> Scorer<'_, F> {
    fn score(&mut self, x: &[f64]) -> Result<f64> {
        self.evals += 1;
        let y = (self.map)(x)?;
        let (mean, var) = self.model.posterior_with(&y, &mut self.scratch);
        Ok(expected_improvement_from_moments(
            mean,
            var.sqrt(),
            self.best,
        ))
    }
}

/// Maximizes expected improvement over `domain`: Sobol candidates are scored,
/// and the best few are refined by bounded coordinate search. Ties go to the
/// earliest candidate.
pub fn maximize_acquisition(
    model: &GaussianProcessModel,
    domain: &SearchDomain,
    best: f64,
    seed: u64,
    config: &AcquisitionConfig,
) -> Result<AcquisitionMaximum> {
    maximize_acquisition_with(model, domain, best, seed, config, |x| Ok(x.to_vec()))
}

/// As [`maximize_acquisition`], scoring every search point `x` at `map(x)`.
/// The controller passes its feasibility repair here so that expected
/// improvement is judged where the policy would actually be evaluated.
pub fn maximize_acquisition_with<F>(
    model: &GaussianProcessModel,
    domain: &SearchDomain,
    best: f64,
    seed: u64,
    config: &AcquisitionConfig,
    map: F,
) -> Result<AcquisitionMaximum>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if model.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: domain.dim(),
        });
    }
    let dim = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stream = SobolStream::with_digital_shift(dim, &mut rng)?;
    let mut scorer = Scorer {
        model,
        best,
        map,
        scratch: Vec::with_capacity(model.len()),
        evals: 0,
    };

    let candidates: Vec<Vec<f64>> = (0..config.candidates.max(1))
        .map(|_| domain.map_unit(&stream.next_unit()))
        .collect();
    let scores = candidates
        .iter()
        .map(|c| scorer.score(c))
        .collect::<Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let widths: Vec<f64> = domain
        .lo
        .iter()
        .zip(&domain.hi)
        .map(|(l, h)| h - l)
        .collect();
    let mut winner: Option<(Vec<f64>, f64)> = None;
    for &start in order.iter().take(config.refine_starts.max(1)) {
        let (x, value) = coordinate_search(
            &mut scorer,
            candidates[start].clone(),
            scores[start],
            domain,
            &widths,
            config,
        )?;
        if winner.as_ref().is_none_or(|(_, w)| value > *w) {
            winner = Some((x, value));
        }
    }
    let (proposal, value) = winner.expect("at least one start");
    let policy = PruningPolicy::new((scorer.map)(&proposal)?)?;
    Ok(AcquisitionMaximum {
        proposal,
        policy,
        value,
    })
}

/// Compass search: try `±step` along each coordinate, keep strict
/// improvements, halve the steps after a sweep without one.
fn coordinate_search<F: FnMut(&[f64]) -> Result<Vec<f64>>>(
    scorer: &mut Scorer<'_, F>,
    mut x: Vec<f64>,
    mut value: f64,
    domain: &SearchDomain,
    widths: &[f64],
    config: &AcquisitionConfig,
) -> Result<(Vec<f64>, f64)> {
    let mut steps: Vec<f64> = widths.iter().map(|w| 0.25 * w).collect();
    let budget = scorer.evals + config.refine_evals;
    let mut trial = x.clone();
    'outer: while scorer.evals < budget {
        if steps
            .iter()
            .zip(widths)
            .all(|(s, w)| *w == 0.0 || *s < config.min_step * w)
        {
            break;
        }
        let mut improved = false;
        for i in 0..x.len() {
            if widths[i] == 0.0 {
                continue;
            }
            for dir in [1.0, -1.0] {
                if scorer.evals >= budget {
                    break 'outer;
                }
                let candidate = (x[i] + dir * steps[i]).clamp(domain.lo[i], domain.hi[i]);
                if candidate == x[i] {
                    continue;
                }
                trial.copy_from_slice(&x);
                trial[i] = candidate;
                let v = scorer.score(&trial)?;
                if v > value {
                    value = v;
                    x[i] = candidate;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            steps.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    Ok((x, value))
}
