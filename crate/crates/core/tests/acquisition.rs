use clusterbo::acquisition::{
    expected_improvement, expected_improvement_from_moments, maximize_acquisition, normal_pdf,
    sobol_next, AcquisitionConfig, SearchDomain, SobolStream, MAX_SOBOL_DIMENSION,
};
use clusterbo::gp::{fit_points, GaussianProcessModel, KernelConfig, KernelKind, LengthScales};
use clusterbo::Error;
use clusterbo_oracle::{ei as ei_oracle, sobol as sobol_oracle};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixed_model(xs: &[Vec<f64>], ys: &[f64], length: f64) -> GaussianProcessModel {
    let config = KernelConfig::fixed(
        KernelKind::SquaredExponential,
        0.04,
        LengthScales::Shared(length),
        1e-6,
    );
    fit_points(xs, ys, xs[0].len(), &config, 0).unwrap()
}

#[test]
fn one_dimensional_prefix() {
    let mut s = SobolStream::new(1).unwrap();
    let got: Vec<f64> = (0..3).map(|_| s.next_unit()[0]).collect();
    assert_eq!(got, vec![0.5, 0.75, 0.25]);
}

#[test]
fn first_three_dimensions_match_hand_built_sequence() {
    let mut s = SobolStream::new(3).unwrap();
    for index in 1..=4096u64 {
        let expected = sobol_oracle::point(3, index);
        assert_eq!(s.next_unit(), expected, "index {index}");
        assert_eq!(s.point(index), expected);
    }
}

#[test]
fn known_three_dimensional_points() {
    // Unscrambled reference values of the standard construction.
    let s = SobolStream::new(3).unwrap();
    assert_eq!(s.point(1), vec![0.5, 0.5, 0.5]);
    assert_eq!(s.point(2), vec![0.75, 0.25, 0.25]);
    assert_eq!(s.point(3), vec![0.25, 0.75, 0.75]);
    assert_eq!(s.point(4), vec![0.375, 0.375, 0.625]);
}

#[test]
fn two_dimensional_dyadic_balance() {
    let mut s = SobolStream::new(2).unwrap();
    // The first 1024 points including the origin form a (0, 10, 2)-net.
    let mut points = vec![s.point(0)];
    points.extend((1..1024).map(|_| s.next_unit()));
    let mut cells = [[0usize; 4]; 4];
    for p in &points {
        cells[(p[0] * 4.0) as usize][(p[1] * 4.0) as usize] += 1;
    }
    assert!(cells.iter().flatten().all(|&c| c == 64), "{cells:?}");
}

#[test]
fn digital_shift_preserves_balance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = SobolStream::with_digital_shift(2, &mut rng).unwrap();
    let mut cells = [[0usize; 4]; 4];
    for i in 0..1024 {
        let p = s.point(i);
        cells[(p[0] * 4.0) as usize][(p[1] * 4.0) as usize] += 1;
    }
    assert!(cells.iter().flatten().all(|&c| c == 64), "{cells:?}");
}

#[test]
fn degenerate_box_gives_a_constant_stream() {
    let domain = SearchDomain::new(vec![0.5; 4], vec![0.5; 4]).unwrap();
    let mut s = SobolStream::new(4).unwrap();
    for _ in 0..50 {
        assert_eq!(sobol_next(&mut s, &domain).unwrap().as_slice(), &[0.5; 4]);
    }
}

#[test]
fn stream_points_stay_in_domain() {
    let domain = SearchDomain::new(vec![0.2, 0.05, 0.7], vec![0.9, 0.3, 1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut s = SobolStream::with_digital_shift(3, &mut rng).unwrap();
    for _ in 0..2000 {
        assert!(domain.contains(sobol_next(&mut s, &domain).unwrap().as_slice()));
    }
}

#[test]
fn stream_dimension_limits() {
    assert!(SobolStream::new(0).is_err());
    assert!(SobolStream::new(MAX_SOBOL_DIMENSION).is_ok());
    assert!(SobolStream::new(MAX_SOBOL_DIMENSION + 1).is_err());
    let mut s = SobolStream::new(2).unwrap();
    let domain = SearchDomain::full(3, 0.05).unwrap();
    assert!(matches!(
        sobol_next(&mut s, &domain),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn ei_closed_form_examples() {
    assert_eq!(expected_improvement_from_moments(0.6, 0.0, 0.6), 0.0);
    assert!((expected_improvement_from_moments(0.9, 0.0, 0.6) - 0.3).abs() < 1e-12);
    assert!((expected_improvement_from_moments(0.2, 1.0, 0.2) - 0.398_94).abs() < 1e-5);
    assert_eq!(
        normal_pdf(0.0),
        expected_improvement_from_moments(0.0, 1.0, 0.0)
    );
}

#[test]
fn ei_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..20 {
        let mean = rng.gen_range(-1.0..1.0);
        let sigma = rng.gen_range(0.01..1.0);
        let best = rng.gen_range(-1.0..1.0);
        let ei = expected_improvement_from_moments(mean, sigma, best);
        let (mc, se) = ei_oracle::monte_carlo(mean, sigma, best, 200_000, case);
        assert!(
            (ei - mc).abs() <= 4.0 * se + 1e-12,
            "case {case}: {ei} vs {mc} ± {se}"
        );
    }
}

#[test]
fn ei_vanishes_at_training_points_below_best() {
    let xs = vec![vec![0.2, 0.4], vec![0.7, 0.9], vec![0.5, 0.1]];
    let ys = vec![0.6, 0.7, 0.65];
    let config = KernelConfig::fixed(
        KernelKind::SquaredExponential,
        0.05,
        LengthScales::Shared(0.3),
        1e-10,
    );
    let model = fit_points(&xs, &ys, 2, &config, 0).unwrap();
    for x in &xs {
        let (mean, _) = model.posterior(x).unwrap();
        assert!(mean < 0.8);
        assert!(expected_improvement(&model, x, 0.8).unwrap() <= 1e-6);
    }
}

#[test]
fn single_point_model_refinement_beats_every_candidate() {
    let model = fixed_model(&[vec![0.525, 0.525]], &[0.9], 0.2);
    let domain = SearchDomain::full(2, 0.05).unwrap();
    let config = AcquisitionConfig::default();
    let best = 0.1;
    let result = maximize_acquisition(&model, &domain, best, 9, &config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let stream = SobolStream::with_digital_shift(2, &mut rng).unwrap();
    for i in 1..=config.candidates as u64 {
        let c = domain.map_unit(&stream.point(i));
        assert!(result.value >= expected_improvement(&model, &c, best).unwrap());
    }
    assert!(domain.contains(result.policy.as_slice()));
}

#[test]
fn degenerate_domain_returns_unique_point() {
    let model = fixed_model(&[vec![0.3, 0.3]], &[0.5], 0.2);
    let domain = SearchDomain::new(vec![0.6, 0.4], vec![0.6, 0.4]).unwrap();
    let result =
        maximize_acquisition(&model, &domain, 0.5, 0, &AcquisitionConfig::default()).unwrap();
    assert_eq!(result.policy.as_slice(), &[0.6, 0.4]);
}

#[test]
fn maximum_is_close_to_dense_grid() {
    let xs = vec![
        vec![0.2, 0.3],
        vec![0.8, 0.7],
        vec![0.5, 0.5],
        vec![0.3, 0.9],
        vec![0.9, 0.2],
    ];
    let ys = vec![0.61, 0.72, 0.68, 0.55, 0.64];
    let model = fixed_model(&xs, &ys, 0.25);
    let domain = SearchDomain::full(2, 0.05).unwrap();
    let best = 0.72;
    let result =
        maximize_acquisition(&model, &domain, best, 4, &AcquisitionConfig::default()).unwrap();
    let mut grid_max = 0.0f64;
    for i in 0..200 {
        for j in 0..200 {
            let x = [
                0.05 + 0.95 * i as f64 / 199.0,
                0.05 + 0.95 * j as f64 / 199.0,
            ];
            grid_max = grid_max.max(expected_improvement(&model, &x, best).unwrap());
        }
    }
    assert!(
        result.value >= grid_max - 1e-3,
        "{} vs grid {}",
        result.value,
        grid_max
    );
    let direct = expected_improvement(&model, result.policy.as_slice(), best).unwrap();
    assert!((direct - result.value).abs() < 1e-12);
}

#[test]
fn maximization_is_deterministic_given_seed() {
    let xs = vec![vec![0.2, 0.3, 0.5], vec![0.8, 0.7, 0.1]];
    let model = fixed_model(&xs, &[0.6, 0.7], 0.3);
    let domain = SearchDomain::full(3, 0.05).unwrap();
    let config = AcquisitionConfig::default();
    let a = maximize_acquisition(&model, &domain, 0.7, 5, &config).unwrap();
    let b = maximize_acquisition(&model, &domain, 0.7, 5, &config).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ei_is_nonnegative_and_monotone_in_sigma(
        gap in -3.0f64..3.0,
        sigma in 0.0f64..2.0,
        extra in 0.0f64..2.0,
    ) {
        let a = expected_improvement_from_moments(gap, sigma, 0.0);
        let b = expected_improvement_from_moments(gap, sigma + extra, 0.0);
        prop_assert!(a >= 0.0);
        prop_assert!(b >= a - 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn maximizer_output_lies_in_domain(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.gen_range(1..=5);
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for _ in 0..dim {
            let a: f64 = rng.gen_range(0.05..=1.0);
            let b: f64 = rng.gen_range(0.05..=1.0);
            lo.push(a.min(b));
            hi.push(a.max(b));
        }
        let domain = SearchDomain::new(lo, hi).unwrap();
        let n = rng.gen_range(1..8);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(0.05..=1.0)).collect()).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..0.9)).collect();
        let model = fixed_model(&xs, &ys, 0.3);
        let config = AcquisitionConfig { candidates: 128, ..AcquisitionConfig::default() };
        let best = ys.iter().cloned().fold(f64::MIN, f64::max);
        let result = maximize_acquisition(&model, &domain, best, seed, &config).unwrap();
        prop_assert!(domain.contains(result.policy.as_slice()));
        prop_assert!(result.value >= 0.0);
    }
}
