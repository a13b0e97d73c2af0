//! Expected improvement by simulation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Monte-Carlo estimate of `E[max(f - best, 0)]` for `f ~ N(mean, sigma^2)`
/// and its standard error.
pub fn monte_carlo(mean: f64, sigma: f64, best: f64, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let z: f64 = StandardNormal.sample(&mut rng);
        let gain = (mean + sigma * z - best).max(0.0);
        sum += gain;
        sum_sq += gain * gain;
    }
    let n = samples as f64;
    let estimate = sum / n;
    let variance = (sum_sq / n - estimate * estimate).max(0.0) * n / (n - 1.0);
    (estimate, (variance / n).sqrt())
}
