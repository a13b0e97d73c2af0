mod common;

use std::time::Duration;

use clusterbo::acquisition::SearchDomain;
use clusterbo::clustering::build_dendrogram;
use clusterbo::environment::{
    project_feasible, repair_with, Environment, ExternalEnvironment, GeneratorConfig, Interaction,
    RecordingEnvironment, ReplayEnvironment, Response, SyntheticEnvSpec, SyntheticEnvironment,
};
use clusterbo::gp::PruningPolicy;
use clusterbo::layer_model::NetworkDescriptor;
use clusterbo::Error;
use clusterbo_oracle::{flops as flops_oracle, synthetic as formula};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two coupled convs. The first carries a negligible share of the FLOPs, so
/// the ratio under a uniform policy p is close to p^2.
const CHAIN: &str = "\
name chain
0 conv 1   512 1 16 16 yes input
1 conv 512 512 3 16 16 yes 0
";

fn chain() -> NetworkDescriptor {
    NetworkDescriptor::parse(CHAIN).unwrap()
}

fn noiseless(base: f64, s: Vec<f64>, g: Vec<f64>) -> SyntheticEnvSpec {
    SyntheticEnvSpec {
        base_accuracy: base,
        sensitivity: s,
        exponent: g,
        interactions: Vec::new(),
        noise: 0.0,
        seed: 0,
    }
}

fn policy(v: &[f64]) -> PruningPolicy {
    PruningPolicy::new(v.to_vec()).unwrap()
}

fn random_spec(rng: &mut ChaCha8Rng, dim: usize) -> SyntheticEnvSpec {
    let interactions = (0..rng.gen_range(0..4))
        .map(|_| Interaction {
            i: rng.gen_range(0..dim),
            j: rng.gen_range(0..dim),
            weight: rng.gen_range(0.0..0.02),
        })
        .collect();
    SyntheticEnvSpec {
        base_accuracy: rng.gen_range(0.6..0.95),
        sensitivity: (0..dim).map(|_| rng.gen_range(0.0..0.3)).collect(),
        exponent: (0..dim).map(|_| rng.gen_range(1.0..3.0)).collect(),
        interactions,
        noise: 0.0,
        seed: rng.gen(),
    }
}

#[test]
fn unpruned_policy_scores_base_accuracy() {
    let net = common::net("vgg16");
    let n = net.dimension();
    let mut env = SyntheticEnvironment::new(noiseless(0.93, vec![0.1; n], vec![2.0; n])).unwrap();
    let e = env
        .evaluate(&net, &PruningPolicy::uniform(n, 1.0).unwrap(), 0.5)
        .unwrap();
    assert_eq!(e.objective, 0.93);
    assert_eq!(e.flops_ratio, 1.0);
    assert!(!e.feasible);
}

#[test]
fn single_layer_substitution() {
    let spec = noiseless(0.9, vec![0.2], vec![2.0]);
    assert!((spec.objective(&[0.5]).unwrap() - 0.85).abs() < 1e-15);
}

#[test]
fn objective_matches_formula_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..500 {
        let dim = rng.gen_range(1..=30);
        let spec = random_spec(&mut rng, dim);
        let p = common::random_policy(&mut rng, dim);
        let pairs: Vec<formula::Pair> = spec
            .interactions
            .iter()
            .map(|x| formula::Pair {
                i: x.i,
                j: x.j,
                weight: x.weight,
            })
            .collect();
        let expected = formula::objective(
            spec.base_accuracy,
            &spec.sensitivity,
            &spec.exponent,
            &pairs,
            &p,
        );
        assert!((spec.mean_objective(&p) - expected).abs() < 1e-12);
    }
}

#[test]
fn noise_is_a_function_of_seed_and_policy() {
    let mut spec = noiseless(0.9, vec![0.1; 3], vec![2.0; 3]);
    spec.noise = 0.01;
    let p = [0.4, 0.6, 0.8];
    assert_eq!(spec.objective(&p).unwrap(), spec.objective(&p).unwrap());
    let mut other = spec.clone();
    other.seed = 1;
    assert_ne!(spec.objective(&p).unwrap(), other.objective(&p).unwrap());
    // Draws over many policies look like unit normals.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let draws: Vec<f64> = (0..4000)
        .map(|_| spec.noise_draw(&common::random_policy(&mut rng, 3)))
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / draws.len() as f64;
    assert!(mean.abs() < 0.06, "{mean}");
    assert!((var - 1.0).abs() < 0.1, "{var}");
}

#[test]
fn spec_validation() {
    assert!(SyntheticEnvironment::new(noiseless(1.2, vec![0.1], vec![2.0])).is_err());
    assert!(SyntheticEnvironment::new(noiseless(0.9, vec![0.1, 0.2], vec![2.0])).is_err());
    assert!(SyntheticEnvironment::new(noiseless(0.9, vec![-0.1], vec![2.0])).is_err());
    let net = common::net("vgg16");
    let mut env = SyntheticEnvironment::new(noiseless(0.9, vec![0.1; 3], vec![2.0; 3])).unwrap();
    assert!(matches!(
        env.evaluate(
            &net,
            &PruningPolicy::uniform(net.dimension(), 0.5).unwrap(),
            0.5
        ),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn spec_round_trips_through_json() {
    let spec = SyntheticEnvSpec::uncorrelated(18, &GeneratorConfig::default(), 4);
    let text = serde_json::to_string(&spec).unwrap();
    assert_eq!(
        serde_json::from_str::<SyntheticEnvSpec>(&text).unwrap(),
        spec
    );
    let unknown = text.replacen('{', "{\"extra\":1,", 1);
    assert!(serde_json::from_str::<SyntheticEnvSpec>(&unknown).is_err());
}

#[test]
fn block_correlated_generator_shares_parameters_within_groups() {
    let net = common::net("resnet56");
    let groups = build_dendrogram(&net.feature_matrix(true))
        .unwrap()
        .cut(3)
        .unwrap();
    let spec = SyntheticEnvSpec::block_correlated(groups.labels(), &GeneratorConfig::default(), 7);
    assert_eq!(spec.dim(), 28);
    for c in groups.clusters() {
        let s: Vec<f64> = c.iter().map(|&i| spec.sensitivity[i]).collect();
        let lo = s.iter().cloned().fold(f64::MAX, f64::min);
        let hi = s.iter().cloned().fold(f64::MIN, f64::max);
        // Members differ by at most the relative jitter on both sides.
        assert!(hi / lo <= 1.1 / 0.9 + 1e-12, "{s:?}");
    }
    assert_eq!(
        spec,
        SyntheticEnvSpec::block_correlated(groups.labels(), &GeneratorConfig::default(), 7)
    );
}

#[test]
fn flops_ratio_reported_by_environment_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for name in common::NETS {
        let net = common::net(name);
        let text = common::net_text(name);
        let n = net.dimension();
        let mut env =
            SyntheticEnvironment::new(noiseless(0.9, vec![0.05; n], vec![2.0; n])).unwrap();
        for _ in 0..20 {
            let p = common::random_policy(&mut rng, n);
            let e = env.evaluate(&net, &policy(&p), 0.5).unwrap();
            assert!((e.flops_ratio - flops_oracle::ratio(&text, &p)).abs() < 1e-12);
            assert_eq!(e.feasible, e.flops_ratio <= 0.5 + 1e-9);
        }
    }
}

#[test]
fn chain_repair_lands_on_square_root() {
    let net = chain();
    let domain = SearchDomain::full(2, 0.05).unwrap();
    let repaired =
        project_feasible(&net, &PruningPolicy::uniform(2, 1.0).unwrap(), 0.5, &domain).unwrap();
    let p = repaired.as_slice();
    assert_eq!(p[0], p[1]);
    assert!((p[0] - 0.5f64.sqrt()).abs() < 1e-4, "{}", p[0]);
    let ratio = net.flops_ratio(p).unwrap();
    assert!((0.5 - 1e-4..=0.5).contains(&ratio), "{ratio}");
    // Exact uniform root of a p + b p^2 = (a + b) / 2.
    let (a, b): (f64, f64) = (512.0, 9.0 * 512.0 * 512.0);
    let exact = (-a + (a * a + 2.0 * b * (a + b)).sqrt()) / (2.0 * b);
    assert!((p[0] - exact).abs() < 2e-6, "{} vs {exact}", p[0]);
}

#[test]
fn repair_examples() {
    let net = common::net("mobilenetv1");
    let n = net.dimension();
    let domain = SearchDomain::full(n, 0.05).unwrap();
    let feasible = PruningPolicy::uniform(n, 0.3).unwrap();
    assert_eq!(
        project_feasible(&net, &feasible, 0.5, &domain).unwrap(),
        feasible
    );

    let high = SearchDomain::new(vec![0.9; n], vec![1.0; n]).unwrap();
    let err =
        project_feasible(&net, &PruningPolicy::uniform(n, 1.0).unwrap(), 0.1, &high).unwrap_err();
    assert!(matches!(err, Error::TargetUnreachable { .. }));
    assert!(err.to_string().contains("target unreachable"));

    let outside = PruningPolicy::uniform(n, 0.01).unwrap();
    assert!(matches!(
        project_feasible(&net, &outside, 0.5, &domain),
        Err(Error::InvalidPolicy(_))
    ));
}

#[test]
fn repair_with_clamps_inside_the_search() {
    // A single heavy coordinate whose lower bound is high: scaling alone
    // would push the light coordinate below its floor.
    let domain = SearchDomain::new(vec![0.05, 0.5], vec![1.0, 1.0]).unwrap();
    let ratio = |x: &[f64]| Ok(0.9 * x[0] + 0.1 * x[1]);
    let y = repair_with(ratio, &[1.0, 1.0], 0.3, &domain).unwrap();
    assert!(domain.contains(&y));
    assert!(0.9 * y[0] + 0.1 * y[1] <= 0.3);
    assert_eq!(y[1], 0.5);
}

#[test]
fn replay_and_recording() {
    let net = common::net("vgg16");
    let n = net.dimension();
    let spec = noiseless(0.9, vec![0.1; n], vec![2.0; n]);
    let mut recorder = RecordingEnvironment::new(SyntheticEnvironment::new(spec).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let policies: Vec<PruningPolicy> = (0..5)
        .map(|_| policy(&common::random_policy(&mut rng, n)))
        .collect();
    let first: Vec<_> = policies
        .iter()
        .map(|p| recorder.evaluate(&net, p, 0.5).unwrap())
        .collect();
    let mut replay = ReplayEnvironment::new(recorder.into_responses());
    assert_eq!(replay.remaining(), 5);
    let second: Vec<_> = policies
        .iter()
        .map(|p| replay.evaluate(&net, p, 0.5).unwrap())
        .collect();
    assert_eq!(first, second);
    assert!(matches!(
        replay.evaluate(&net, &policies[0], 0.5),
        Err(Error::Environment { .. })
    ));

    let mut fixed = ReplayEnvironment::new(vec![Response {
        objective: 0.7,
        flops_ratio: 0.6,
    }]);
    let e = fixed.evaluate(&net, &policies[0], 0.5).unwrap();
    assert_eq!((e.objective, e.flops_ratio, e.feasible), (0.7, 0.6, false));
}

#[cfg(unix)]
mod external {
    use super::*;

    fn env(script: &str, timeout_ms: u64) -> ExternalEnvironment {
        ExternalEnvironment::new(script, Duration::from_millis(timeout_ms))
    }

    #[test]
    fn echoing_backend_round_trips_values() {
        let net = chain();
        // Replies with the first ratio as objective and the target as FLOPs ratio.
        let script = "while IFS=, read a b t; do echo \"$a,$t\"; done";
        let mut e = env(script, 5000);
        let r = e.evaluate(&net, &policy(&[0.25, 0.75]), 0.5).unwrap();
        assert_eq!((r.objective, r.flops_ratio, r.feasible), (0.25, 0.5, true));
        let r = e.evaluate(&net, &policy(&[0.125, 0.5]), 0.4).unwrap();
        assert_eq!((r.objective, r.flops_ratio, r.feasible), (0.125, 0.4, true));
    }

    #[test]
    fn malformed_reply_carries_payload() {
        let mut e = env("while read l; do echo 'not a number'; done", 5000);
        match e.evaluate(&chain(), &policy(&[0.5, 0.5]), 0.5) {
            Err(Error::Environment { payload, .. }) => {
                assert_eq!(payload.as_deref(), Some("not a number"))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn silent_backend_times_out() {
        let mut e = env("sleep 30", 200);
        let start = std::time::Instant::now();
        let err = e.evaluate(&chain(), &policy(&[0.5, 0.5]), 0.5).unwrap_err();
        assert!(matches!(err, Error::Environment { .. }));
        assert!(err.to_string().contains("did not reply"), "{err}");
        assert!(start.elapsed() < Duration::from_secs(10));
    }

    #[test]
    fn exiting_backend_is_an_error() {
        let mut e = env("read l; exit 3", 5000);
        assert!(matches!(
            e.evaluate(&chain(), &policy(&[0.5, 0.5]), 0.5),
            Err(Error::Environment { .. })
        ));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn objective_is_monotone_in_each_coordinate(seed in any::<u64>(), bump in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.gen_range(1..=20);
        let spec = random_spec(&mut rng, dim);
        let p = common::random_policy(&mut rng, dim);
        let i = rng.gen_range(0..dim);
        let mut q = p.clone();
        q[i] = (q[i] + bump).min(1.0);
        prop_assert!(spec.mean_objective(&q) >= spec.mean_objective(&p) - 1e-15);
    }

    #[test]
    fn repaired_policies_are_feasible(seed in any::<u64>(), target in 0.05f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let name = common::NETS[rng.gen_range(0..common::NETS.len())];
        let net = common::net(name);
        let n = net.dimension();
        let domain = SearchDomain::full(n, 0.05).unwrap();
        let p = policy(&common::random_policy(&mut rng, n));
        match project_feasible(&net, &p, target, &domain) {
            Ok(r) => {
                prop_assert!(net.flops_ratio(r.as_slice()).unwrap() <= target);
                prop_assert!(domain.contains(r.as_slice()));
            }
            Err(Error::TargetUnreachable { lower_ratio, .. }) => prop_assert!(lower_ratio > target),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }
}
