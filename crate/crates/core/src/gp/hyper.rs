//! Log marginal likelihood with analytic gradient, and its maximization over
//! log-space hyperparameters by multi-start Rprop.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::kernel::{Hyperparameters, KernelKind};
use super::linalg::{
    cholesky_in_place, dot, inverse_from_cholesky, solve_lower, solve_upper_transposed,
};
use super::JITTER;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Training data with pairwise squared coordinate differences cached for
/// repeated likelihood evaluations.
pub(crate) struct LikelihoodProblem<'a> {
    pub kind: KernelKind,
    pub n: usize,
    pub dim: usize,
    /// Centered targets.
    pub y: &'a [f64],
    /// For each pair `i > j` (row-major over the strict lower triangle), the
    /// `dim` squared differences.
    sq_diff: Vec<f64>,
}

impl<'a> LikelihoodProblem<'a> {
    pub fn new(kind: KernelKind, inputs: &[&[f64]], dim: usize, y: &'a [f64]) -> Self {
        let n = inputs.len();
        let mut sq_diff = Vec::with_capacity(n * n.saturating_sub(1) / 2 * dim);
        for i in 0..n {
            for j in 0..i {
                sq_diff.extend(
                    inputs[i]
                        .iter()
                        .zip(inputs[j])
                        .map(|(a, b)| (a - b) * (a - b)),
                );
            }
        }
        Self {
            kind,
            n,
            dim,
            y,
            sq_diff,
        }
    }

    /// Returns the log marginal likelihood and, if requested, its gradient
    /// with respect to `[log l_1 .. log l_d, log variance, log noise]`.
    /// `None` when the covariance is not positive definite.
    pub fn evaluate(&self, theta: &[f64], want_grad: bool) -> Option<(f64, Vec<f64>)> {
        let (n, d) = (self.n, self.dim);
        let hyper = Hyperparameters::from_log(theta);
        let inv_l2: Vec<f64> = hyper.length_scales.iter().map(|l| 1.0 / (l * l)).collect();
        let var = hyper.variance;

        let mut k = vec![0.0; n * n];
        let mut p = 0;
        for i in 0..n {
            for j in 0..i {
                let r2 = dot(&self.sq_diff[p * d..(p + 1) * d], &inv_l2);
                let v = var * self.kind.correlation(r2);
                k[i * n + j] = v;
                k[j * n + i] = v;
                p += 1;
            }
            k[i * n + i] = var + hyper.noise + JITTER;
        }
        if !cholesky_in_place(&mut k, n) {
            return None;
        }
        let l = k;
        let mut alpha = self.y.to_vec();
        solve_lower(&l, n, &mut alpha);
        let quad = dot(&alpha, &alpha);
        solve_upper_transposed(&l, n, &mut alpha);
        let log_det_half: f64 = (0..n).map(|i| l[i * n + i].ln()).sum();
        let lml = -0.5 * quad - log_det_half - 0.5 * n as f64 * LN_2PI;
        if !lml.is_finite() {
            return None;
        }
        if !want_grad {
            return Some((lml, Vec::new()));
        }

        // W = alpha alphaᵀ - K⁻¹; grad = 1/2 tr(W dK).
        let kinv = inverse_from_cholesky(&l, n);
        let mut grad = vec![0.0; d + 2];
        let mut p = 0;
        for i in 0..n {
            for j in 0..i {
                let w = alpha[i] * alpha[j] - kinv[i * n + j];
                let sq = &self.sq_diff[p * d..(p + 1) * d];
                let r2 = dot(sq, &inv_l2);
                // Off-diagonal pairs appear twice in the trace.
                let corr = self.kind.correlation(r2);
                grad[d] += w * var * corr;
                let g = w * var * self.kind.length_scale_factor(r2);
                for ((gd, s), il) in grad[..d].iter_mut().zip(sq).zip(&inv_l2) {
                    *gd += g * s * il;
                }
                p += 1;
            }
        }
        let mut diag_var = 0.0;
        let mut diag_noise = 0.0;
        for i in 0..n {
            let w = alpha[i] * alpha[i] - kinv[i * n + i];
            diag_var += w * var;
            diag_noise += w * hyper.noise;
        }
        grad[d] += 0.5 * diag_var;
        grad[d + 1] = 0.5 * diag_noise;
        Some((lml, grad))
    }
}

/// Log-space box for the optimizer.
#[derive(Debug, Clone)]
pub(crate) struct LogBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl LogBounds {
    pub fn clamp(&self, theta: &mut [f64]) {
        for ((t, lo), hi) in theta.iter_mut().zip(&self.lo).zip(&self.hi) {
            *t = t.clamp(*lo, *hi);
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(lo, hi)| {
                if hi > lo {
                    rng.gen_range(*lo..*hi)
                } else {
                    *lo
                }
            })
            .collect()
    }
}

/// Bounded iRprop- ascent. Returns the best point visited and its value.
pub(crate) fn rprop_ascent(
    problem: &LikelihoodProblem<'_>,
    start: Vec<f64>,
    start_value: Option<f64>,
    bounds: &LogBounds,
    max_iterations: usize,
) -> Option<(Vec<f64>, f64)> {
    const INCREASE: f64 = 1.2;
    const DECREASE: f64 = 0.5;
    const STEP_MIN: f64 = 1e-4;
    const STEP_MAX: f64 = 1.0;
    /// Iterations without a relative gain of `GAIN` end the ascent.
    const PATIENCE: usize = 5;
    const GAIN: f64 = 1e-6;

    let mut theta = start;
    let mut best: Option<(Vec<f64>, f64)> = start_value.map(|v| (theta.clone(), v));
    let mut step = vec![0.1; theta.len()];
    let mut prev_grad = vec![0.0; theta.len()];
    let mut stale = 0;
    for _ in 0..max_iterations {
        let Some((value, mut grad)) = problem.evaluate(&theta, true) else {
            // Step back halfway towards the best point and shrink.
            let (anchor, _) = best.as_ref()?;
            for ((t, a), s) in theta.iter_mut().zip(anchor).zip(step.iter_mut()) {
                *t = 0.5 * (*t + a);
                *s = (*s * DECREASE).max(STEP_MIN);
            }
            prev_grad.iter_mut().for_each(|g| *g = 0.0);
            continue;
        };
        match best.as_ref() {
            Some((_, b)) if value <= *b + GAIN * b.abs().max(1.0) => {
                stale += 1;
                if value > *b {
                    best = Some((theta.clone(), value));
                }
                if stale >= PATIENCE {
                    break;
                }
            }
            _ => {
                stale = 0;
                best = Some((theta.clone(), value));
            }
        }
        let mut moved = false;
        for i in 0..theta.len() {
            let sign = grad[i] * prev_grad[i];
            if sign > 0.0 {
                step[i] = (step[i] * INCREASE).min(STEP_MAX);
            } else if sign < 0.0 {
                step[i] = (step[i] * DECREASE).max(STEP_MIN);
                grad[i] = 0.0;
            }
            let before = theta[i];
            theta[i] += grad[i].signum() * step[i] * (grad[i] != 0.0) as u8 as f64;
            theta[i] = theta[i].clamp(bounds.lo[i], bounds.hi[i]);
            moved |= (theta[i] - before).abs() > STEP_MIN * 0.5;
        }
        prev_grad = grad;
        if !moved {
            break;
        }
    }
    best
}
