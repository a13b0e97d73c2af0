//! Dense Gaussian-process posterior and marginal likelihood in double-double
//! precision via Gauss-Jordan elimination. Mirrors the model definition:
//! constant mean equal to the target average, covariance
//! `K + (noise + jitter) I`, latent (noise-free) predictive variance.

use crate::dd::Dd;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    SquaredExponential,
    Matern52,
}

#[derive(Debug, Clone)]
pub struct Params {
    pub kernel: Kernel,
    pub variance: f64,
    pub length_scales: Vec<f64>,
    pub noise: f64,
    pub jitter: f64,
}

impl Params {
    pub fn k(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.length_scales) {
            r2 += ((x - y) / l).powi(2);
        }
        match self.kernel {
            Kernel::SquaredExponential => self.variance * (-r2 / 2.0).exp(),
            Kernel::Matern52 => {
                let r = (5.0 * r2).sqrt();
                self.variance * (1.0 + r + r * r / 3.0) * (-r).exp()
            }
        }
    }

    fn gram(&self, xs: &[Vec<f64>]) -> Vec<Vec<Dd>> {
        let n = xs.len();
        let mut m = vec![vec![Dd::ZERO; n]; n];
        for i in 0..n {
            for j in 0..n {
                m[i][j] = Dd::new(self.k(&xs[i], &xs[j]));
            }
            m[i][i] = m[i][i] + Dd::new(self.noise) + Dd::new(self.jitter);
        }
        m
    }
}

/// Solves `A X = B` for every column of `B`; returns `X` and `log |det A|`.
fn gauss_jordan(mut a: Vec<Vec<Dd>>, mut b: Vec<Vec<Dd>>) -> (Vec<Vec<Dd>>, Dd) {
    let n = a.len();
    let mut log_det = Dd::ZERO;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().hi.total_cmp(&a[j][col].abs().hi))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        log_det = log_det + p.abs().ln();
        for v in a[col].iter_mut() {
            *v = *v / p;
        }
        for v in b[col].iter_mut() {
            *v = *v / p;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = a[row][col];
            if f == Dd::ZERO {
                continue;
            }
            for c in 0..n {
                let t = a[col][c];
                a[row][c] = a[row][c] - f * t;
            }
            for c in 0..b[row].len() {
                let t = b[col][c];
                b[row][c] = b[row][c] - f * t;
            }
        }
    }
    (b, log_det)
}

fn mean(ys: &[f64]) -> Dd {
    let mut s = Dd::ZERO;
    for y in ys {
        s = s + Dd::new(*y);
    }
    s / Dd::new(ys.len() as f64)
}

/// Posterior mean and latent variance at `query`.
pub fn posterior(params: &Params, xs: &[Vec<f64>], ys: &[f64], query: &[f64]) -> (f64, f64) {
    let m = mean(ys);
    let kq: Vec<Dd> = xs.iter().map(|x| Dd::new(params.k(query, x))).collect();
    let rhs: Vec<Vec<Dd>> = ys
        .iter()
        .zip(&kq)
        .map(|(y, k)| vec![Dd::new(*y) - m, *k])
        .collect();
    let (sol, _) = gauss_jordan(params.gram(xs), rhs);
    let mut mu = m;
    let mut reduction = Dd::ZERO;
    for (k, s) in kq.iter().zip(&sol) {
        mu = mu + *k * s[0];
        reduction = reduction + *k * s[1];
    }
    let var = Dd::new(params.k(query, query)) - reduction;
    (mu.to_f64(), var.to_f64().max(0.0))
}

/// `log p(y | X)` of the centred targets.
pub fn log_marginal_likelihood(params: &Params, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let m = mean(ys);
    let centred: Vec<Dd> = ys.iter().map(|y| Dd::new(*y) - m).collect();
    let rhs = centred.iter().map(|c| vec![*c]).collect();
    let (sol, log_det) = gauss_jordan(params.gram(xs), rhs);
    let mut quad = Dd::ZERO;
    for (c, s) in centred.iter().zip(&sol) {
        quad = quad + *c * s[0];
    }
    let n = ys.len() as f64;
    (Dd::new(-0.5) * quad - Dd::new(0.5) * log_det).to_f64()
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}
