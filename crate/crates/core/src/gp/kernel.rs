use serde::{Deserialize, Serialize};

/// Stationary covariance family with per-dimension length-scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    SquaredExponential,
    Matern52,
}

const SQRT5: f64 = 2.236_067_977_499_79;

impl KernelKind {
    /// Unit-variance correlation at scaled squared distance
    /// `r2 = sum_d (x_d - x'_d)^2 / l_d^2`.
    #[inline]
    pub fn correlation(self, r2: f64) -> f64 {
        match self {
            KernelKind::SquaredExponential => (-0.5 * r2).exp(),
            KernelKind::Matern52 => {
                let r = r2.sqrt();
                (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
            }
        }
    }

    /// `g(r2)` such that `d k / d log l_d = variance * g(r2) * (x_d - x'_d)^2 / l_d^2`.
    #[inline]
    pub(crate) fn length_scale_factor(self, r2: f64) -> f64 {
        match self {
            KernelKind::SquaredExponential => (-0.5 * r2).exp(),
            KernelKind::Matern52 => {
                let r = r2.sqrt();
                5.0 / 3.0 * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp()
            }
        }
    }
}

/// Kernel hyperparameters: signal variance, one length-scale per input
/// dimension and observation-noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub variance: f64,
    pub length_scales: Vec<f64>,
    pub noise: f64,
}

impl Hyperparameters {
    pub fn isotropic(dim: usize, variance: f64, length_scale: f64, noise: f64) -> Self {
        Self {
            variance,
            length_scales: vec![length_scale; dim],
            noise,
        }
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    /// Packs into the optimizer's log-space vector
    /// `[log l_1 .. log l_d, log variance, log noise]`.
    pub(crate) fn to_log(&self) -> Vec<f64> {
        let mut theta: Vec<f64> = self.length_scales.iter().map(|l| l.ln()).collect();
        theta.push(self.variance.ln());
        theta.push(self.noise.ln());
        theta
    }

    pub(crate) fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        Self {
            length_scales: theta[..d].iter().map(|t| t.exp()).collect(),
            variance: theta[d].exp(),
            noise: theta[d + 1].exp(),
        }
    }
}

/// Fixed length-scale given either once for all dimensions or per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LengthScales {
    Shared(f64),
    PerDimension(Vec<f64>),
}

impl LengthScales {
    pub fn expand(&self, dim: usize) -> Vec<f64> {
        match self {
            LengthScales::Shared(l) => vec![*l; dim],
            LengthScales::PerDimension(v) => v.clone(),
        }
    }
}
