//! The synthetic accuracy formula, noise-free, summed with Neumaier
//! compensation.

pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// `a0 - sum s_i (1 - p_i)^g_i - sum w_ij (1 - p_i)(1 - p_j)`, unclamped.
pub fn objective(a0: f64, s: &[f64], g: &[f64], pairs: &[Pair], p: &[f64]) -> f64 {
    let mut terms = vec![a0];
    for i in 0..p.len() {
        let drop = 1.0 - p[i];
        let power = if drop == 0.0 {
            0.0
        } else {
            (g[i] * drop.ln()).exp()
        };
        terms.push(-s[i] * power);
    }
    for pair in pairs {
        terms.push(-pair.weight * (1.0 - p[pair.i]) * (1.0 - p[pair.j]));
    }
    neumaier(&terms)
}

fn neumaier(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}
