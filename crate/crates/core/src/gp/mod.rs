//! Gaussian-process surrogate over pruning policies.
//!
//! The prior mean is the empirical mean of the targets; the model stores the
//! Cholesky factor of `K + (noise + jitter) I` and the weights
//! `alpha = (K + noise I)⁻¹ (y - mean)`, so every posterior query is a pair of
//! triangular operations.

mod history;
mod hyper;
mod kernel;
pub(crate) mod linalg;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use history::{PruningPolicy, TrialHistory, TrialRecord};
pub use kernel::{Hyperparameters, KernelKind, LengthScales};

use hyper::{rprop_ascent, LikelihoodProblem, LogBounds};
use linalg::{cholesky_in_place, dot, solve_lower, solve_upper_transposed};

/// Diagonal floor added to every covariance matrix.
pub const JITTER: f64 = 1e-8;

/// Hyperparameters supplied instead of being fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedHyperparameters {
    pub variance: f64,
    pub length_scale: LengthScales,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub kind: KernelKind,
    /// When set, no likelihood optimization takes place.
    pub fixed: Option<FixedHyperparameters>,
    /// Random starting points for the likelihood ascent.
    pub restarts: usize,
    /// How many of the best starting points (by likelihood) are refined.
    pub refine: usize,
    pub max_iterations: usize,
    pub length_scale_bounds: (f64, f64),
    pub variance_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            kind: KernelKind::SquaredExponential,
            fixed: None,
            restarts: 8,
            refine: 2,
            max_iterations: 40,
            length_scale_bounds: (1e-2, 1e1),
            variance_bounds: (1e-4, 1e2),
            noise_bounds: (1e-8, 1e-1),
        }
    }
}

impl KernelConfig {
    pub fn fixed(kind: KernelKind, variance: f64, length_scale: LengthScales, noise: f64) -> Self {
        Self {
            kind,
            fixed: Some(FixedHyperparameters {
                variance,
                length_scale,
                noise,
            }),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |name: &str, (lo, hi): (f64, f64)| {
            if lo > 0.0 && hi >= lo && hi.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} bounds must satisfy 0 < lo <= hi"
                )))
            }
        };
        ordered("length_scale", self.length_scale_bounds)?;
        ordered("variance", self.variance_bounds)?;
        ordered("noise", self.noise_bounds)?;
        if self.fixed.is_none() && self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if let Some(f) = &self.fixed {
            if !(f.variance > 0.0) || !(f.noise >= 0.0) {
                return Err(Error::Config(
                    "fixed variance must be > 0 and noise >= 0".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianProcessModel {
    kind: KernelKind,
    hyper: Hyperparameters,
    dim: usize,
    n: usize,
    /// Row-major `n x dim` training inputs.
    inputs: Vec<f64>,
    target_mean: f64,
    /// Row-major lower Cholesky factor of `K + (noise + jitter) I`.
    factor: Vec<f64>,
    alpha: Vec<f64>,
    log_marginal_likelihood: f64,
}

/// Fits a GP to every record of `history`.
pub fn fit(
    history: &TrialHistory,
    config: &KernelConfig,
    seed: u64,
) -> Result<GaussianProcessModel> {
    fit_points(
        &history.inputs(),
        &history.targets(),
        history.dim(),
        config,
        seed,
    )
}

/// Fits a GP to raw inputs and targets.
pub fn fit_points<X: AsRef<[f64]>>(
    inputs: &[X],
    targets: &[f64],
    dim: usize,
    config: &KernelConfig,
    seed: u64,
) -> Result<GaussianProcessModel> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(Error::Gp("cannot fit to an empty history".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::Gp("inputs and targets differ in length".into()));
    }
    let inputs: Vec<&[f64]> = inputs.iter().map(AsRef::as_ref).collect();
    for x in &inputs {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Gp("non-finite input".into()));
        }
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Gp("non-finite target".into()));
    }

    let hyper = match &config.fixed {
        Some(fixed) => {
            let length_scales = fixed.length_scale.expand(dim);
            if length_scales.len() != dim || length_scales.iter().any(|l| !(*l > 0.0)) {
                return Err(Error::Config(format!(
                    "fixed length-scales must be {dim} positive values"
                )));
            }
            if fixed.noise == 0.0 {
                check_conflicting_duplicates(&inputs, targets)?;
            }
            Hyperparameters {
                variance: fixed.variance,
                length_scales,
                noise: fixed.noise,
            }
        }
        None => optimize_hyperparameters(&inputs, targets, dim, config, seed)?,
    };
    GaussianProcessModel::with_hyperparameters(config.kind, hyper, &inputs, targets)
}

fn check_conflicting_duplicates(inputs: &[&[f64]], targets: &[f64]) -> Result<()> {
    for i in 0..inputs.len() {
        for j in 0..i {
            if inputs[i] == inputs[j] && targets[i] != targets[j] {
                return Err(Error::Gp(format!(
                    "records {j} and {i} share an input but disagree on the target; \
                     set a positive noise variance"
                )));
            }
        }
    }
    Ok(())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn optimize_hyperparameters(
    inputs: &[&[f64]],
    targets: &[f64],
    dim: usize,
    config: &KernelConfig,
    seed: u64,
) -> Result<Hyperparameters> {
    let m = mean(targets);
    let y: Vec<f64> = targets.iter().map(|t| t - m).collect();
    let problem = LikelihoodProblem::new(config.kind, inputs, dim, &y);

    let ln = |(lo, hi): (f64, f64)| (lo.ln(), hi.ln());
    let (l_lo, l_hi) = ln(config.length_scale_bounds);
    let (v_lo, v_hi) = ln(config.variance_bounds);
    let (s_lo, s_hi) = ln(config.noise_bounds);
    let mut lo = vec![l_lo; dim];
    let mut hi = vec![l_hi; dim];
    lo.extend([v_lo, s_lo]);
    hi.extend([v_hi, s_hi]);
    let bounds = LogBounds { lo, hi };

    // A data-driven start plus `restarts` log-uniform random ones.
    let spread = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    let mut heuristic =
        Hyperparameters::isotropic(dim, spread.max(1e-4), 0.5, (spread * 1e-2).max(1e-6)).to_log();
    bounds.clamp(&mut heuristic);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![heuristic];
    starts.extend((0..config.restarts).map(|_| bounds.sample(&mut rng)));

    let mut scored: Vec<(usize, f64)> = starts
        .iter()
        .enumerate()
        .filter_map(|(i, s)| problem.evaluate(s, false).map(|(v, _)| (i, v)))
        .collect();
    if scored.is_empty() {
        return Err(Error::Gp(
            "covariance is singular at every starting point; raise the noise floor".into(),
        ));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut best: Option<(Vec<f64>, f64)> = None;
    for &(i, value) in scored.iter().take(config.refine.max(1)) {
        let found = rprop_ascent(
            &problem,
            starts[i].clone(),
            Some(value),
            &bounds,
            config.max_iterations,
        );
        if let Some((theta, v)) = found {
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((theta, v));
            }
        }
    }
    let (theta, _) = best.expect("at least one scored start");
    Ok(Hyperparameters::from_log(&theta))
}

impl GaussianProcessModel {
    /// Conditions a GP with the given hyperparameters on the data.
    pub fn with_hyperparameters<X: AsRef<[f64]>>(
        kind: KernelKind,
        hyper: Hyperparameters,
        inputs: &[X],
        targets: &[f64],
    ) -> Result<Self> {
        let n = inputs.len();
        let dim = hyper.dim();
        if n == 0 || targets.len() != n {
            return Err(Error::Gp(
                "inputs and targets must be non-empty and equal in length".into(),
            ));
        }
        let mut flat = Vec::with_capacity(n * dim);
        for x in inputs {
            let x = x.as_ref();
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: x.len(),
                });
            }
            flat.extend_from_slice(x);
        }
        let target_mean = mean(targets);
        let mut model = Self {
            kind,
            hyper,
            dim,
            n,
            inputs: flat,
            target_mean,
            factor: Vec::new(),
            alpha: Vec::new(),
            log_marginal_likelihood: f64::NAN,
        };
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let v = model.covariance(model.input(i), model.input(j));
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
            k[i * n + i] = model.hyper.variance + model.hyper.noise + JITTER;
        }
        if !cholesky_in_place(&mut k, n) {
            return Err(Error::Gp(
                "covariance matrix is not positive definite; raise the noise floor".into(),
            ));
        }
        let mut alpha: Vec<f64> = targets.iter().map(|t| t - target_mean).collect();
        solve_lower(&k, n, &mut alpha);
        let quad = dot(&alpha, &alpha);
        solve_upper_transposed(&k, n, &mut alpha);
        let log_det_half: f64 = (0..n).map(|i| k[i * n + i].ln()).sum();
        model.log_marginal_likelihood =
            -0.5 * quad - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        model.factor = k;
        model.alpha = alpha;
        Ok(model)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of training points.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    /// Prior covariance between two points (no noise term).
    pub fn covariance(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.hyper.length_scales)
            .map(|((x, y), l)| {
                let t = (x - y) / l;
                t * t
            })
            .sum();
        self.hyper.variance * self.kind.correlation(r2)
    }

    /// Posterior mean and variance of the latent function at `query`.
    pub fn posterior(&self, query: &[f64]) -> Result<(f64, f64)> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        let mut scratch = Vec::with_capacity(self.n);
        Ok(self.posterior_with(query, &mut scratch))
    }

    /// Allocation-free posterior for hot loops; `query.len()` must equal `dim`.
    pub(crate) fn posterior_with(&self, query: &[f64], scratch: &mut Vec<f64>) -> (f64, f64) {
        debug_assert_eq!(query.len(), self.dim);
        scratch.clear();
        scratch.extend((0..self.n).map(|i| self.covariance(query, self.input(i))));
        let mean = self.target_mean + dot(scratch, &self.alpha);
        solve_lower(&self.factor, self.n, scratch);
        let variance = (self.hyper.variance - dot(scratch, scratch)).max(0.0);
        (mean, variance)
    }
}
