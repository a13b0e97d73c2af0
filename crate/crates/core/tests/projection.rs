mod common;

use clusterbo::acquisition::SearchDomain;
use clusterbo::clustering::{build_dendrogram, ClusterAssignment, Dendrogram};
use clusterbo::gp::{
    GaussianProcessModel, Hyperparameters, KernelKind, PruningPolicy, TrialHistory, TrialRecord,
};
use clusterbo::layer_model::{FeatureMatrix, FEATURE_COUNT};
use clusterbo::projection::{
    bounds_touched, lift, lift_domain, scaled_domain, seed_history, to_layers, widen, Bound,
    DomainMode, EliteBuffer, StagePlan, DOMAIN_FLOOR, ELITE_CAPACITY, WIDEN_MIN_STEP,
};
use clusterbo::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dendrogram(rng: &mut ChaCha8Rng, max_n: usize) -> Dendrogram {
    let n = rng.gen_range(2..=max_n);
    let rows = (0..n)
        .map(|_| {
            let mut r = [0.0; FEATURE_COUNT];
            r.iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
            r
        })
        .collect();
    build_dendrogram(&FeatureMatrix::from_rows(rows)).unwrap()
}

/// Three nested cuts with non-decreasing cluster counts.
fn nested_cuts(rng: &mut ChaCha8Rng, d: &Dendrogram) -> [ClusterAssignment; 3] {
    let n = d.leaves().len();
    let mut counts = [
        rng.gen_range(1..=n),
        rng.gen_range(1..=n),
        rng.gen_range(1..=n),
    ];
    counts.sort_unstable();
    counts.map(|c| d.cut(c).unwrap())
}

fn random_policy(rng: &mut ChaCha8Rng, dim: usize) -> PruningPolicy {
    PruningPolicy::new(common::random_policy(rng, dim)).unwrap()
}

/// Lift computed from leaf membership alone: each target cluster takes the
/// value of the source cluster holding any of its members.
fn lift_by_membership(
    policy: &PruningPolicy,
    from: &ClusterAssignment,
    to: &ClusterAssignment,
) -> Vec<f64> {
    let mut out = vec![f64::NAN; to.count()];
    for (pos, &label) in to.labels().iter().enumerate() {
        out[label] = policy.as_slice()[from.labels()[pos]];
    }
    out
}

#[test]
fn broadcast_from_one_cluster() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let d = random_dendrogram(&mut rng, 8);
    let one = d.cut(1).unwrap();
    let three = d.cut(3.min(d.leaves().len())).unwrap();
    let lifted = lift(&PruningPolicy::new(vec![0.6]).unwrap(), &one, &three).unwrap();
    assert!(lifted.as_slice().iter().all(|&v| v == 0.6));
}

#[test]
fn lift_matches_membership_and_composes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let d = random_dendrogram(&mut rng, 30);
        let [a, b, c] = nested_cuts(&mut rng, &d);
        let p = random_policy(&mut rng, a.count());
        let ab = lift(&p, &a, &b).unwrap();
        assert_eq!(ab.as_slice(), lift_by_membership(&p, &a, &b).as_slice());
        let twice = lift(&ab, &b, &c).unwrap();
        let direct = lift(&p, &a, &c).unwrap();
        assert_eq!(twice, direct);
        assert_eq!(to_layers(&direct, &c).unwrap(), to_layers(&p, &a).unwrap());
    }
}

#[test]
fn lift_to_singletons_keeps_flops() {
    let net = common::net("mobilenetv1");
    let d = build_dendrogram(&net.feature_matrix(true)).unwrap();
    let coarse = d.cut(4).unwrap();
    let fine = d.cut(net.dimension()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let p = random_policy(&mut rng, 4);
        let lifted = lift(&p, &coarse, &fine).unwrap();
        let shared = to_layers(&p, &coarse).unwrap();
        assert_eq!(
            net.flops_ratio(to_layers(&lifted, &fine).unwrap().as_slice())
                .unwrap(),
            net.flops_ratio(shared.as_slice()).unwrap()
        );
    }
}

#[test]
fn lift_rejects_non_nested_and_wrong_dimension() {
    let a = ClusterAssignment::from_raw(&[0, 0, 1, 1], (0..4).collect());
    let b = ClusterAssignment::from_raw(&[0, 1, 1, 2], (0..4).collect());
    let p = PruningPolicy::new(vec![0.5, 0.6]).unwrap();
    assert!(matches!(lift(&p, &a, &b), Err(Error::NotNested)));
    let q = PruningPolicy::new(vec![0.5]).unwrap();
    assert!(matches!(
        lift(&q, &a, &a),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn scaled_domain_examples() {
    let two = ClusterAssignment::from_raw(&[0, 0, 1], (0..3).collect());
    let three = ClusterAssignment::singletons((0..3).collect());
    let mut buffer = EliteBuffer::new(ELITE_CAPACITY);
    buffer.push(PruningPolicy::new(vec![0.5, 0.7]).unwrap(), 0.8);
    let single =
        scaled_domain(&buffer, &two, &three, DomainMode::PerCluster, DOMAIN_FLOOR).unwrap();
    assert_eq!(single.lo(), &[0.5, 0.5, 0.7]);
    assert_eq!(single.hi(), &[0.5, 0.5, 0.7]);

    let mut buffer = EliteBuffer::new(ELITE_CAPACITY);
    buffer.push(PruningPolicy::new(vec![0.4, 0.8]).unwrap(), 0.8);
    buffer.push(PruningPolicy::new(vec![0.6, 0.6]).unwrap(), 0.7);
    let box2 = scaled_domain(&buffer, &two, &two, DomainMode::PerCluster, DOMAIN_FLOOR).unwrap();
    assert_eq!(box2.lo(), &[0.4, 0.6]);
    assert_eq!(box2.hi(), &[0.6, 0.8]);

    let global = scaled_domain(&buffer, &two, &two, DomainMode::Global, DOMAIN_FLOOR).unwrap();
    assert_eq!(global.lo(), &[0.4, 0.4]);
    assert_eq!(global.hi(), &[0.8, 0.8]);

    let empty = EliteBuffer::new(ELITE_CAPACITY);
    assert!(matches!(
        scaled_domain(&empty, &two, &three, DomainMode::PerCluster, DOMAIN_FLOOR),
        Err(Error::EmptyBuffer)
    ));
}

#[test]
fn elites_lie_inside_scaled_domain() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let d = random_dendrogram(&mut rng, 30);
        let [from, to, _] = nested_cuts(&mut rng, &d);
        let mut buffer = EliteBuffer::new(ELITE_CAPACITY);
        for _ in 0..rng.gen_range(1..=25) {
            let obj = rng.gen_range(0.0..1.0);
            buffer.push(random_policy(&mut rng, from.count()), obj);
        }
        assert!(buffer.len() <= ELITE_CAPACITY);
        for mode in [DomainMode::PerCluster, DomainMode::Global] {
            let domain = scaled_domain(&buffer, &from, &to, mode, DOMAIN_FLOOR).unwrap();
            for (p, _) in buffer.entries() {
                assert!(domain.contains(lift(p, &from, &to).unwrap().as_slice()));
            }
            assert!(domain.lo().iter().all(|&l| l > 0.0 && l <= 1.0));
            assert!(domain.hi().iter().all(|&h| h <= 1.0));
        }
    }
}

#[test]
fn scaled_domain_stays_within_previous_domain() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..300 {
        let d = random_dendrogram(&mut rng, 20);
        let [from, to, _] = nested_cuts(&mut rng, &d);
        let dim = from.count();
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for _ in 0..dim {
            let a: f64 = rng.gen_range(DOMAIN_FLOOR..=1.0);
            let b: f64 = rng.gen_range(DOMAIN_FLOOR..=1.0);
            lo.push(a.min(b));
            hi.push(a.max(b));
        }
        let previous = SearchDomain::new(lo.clone(), hi.clone()).unwrap();
        let mut buffer = EliteBuffer::new(ELITE_CAPACITY);
        for _ in 0..rng.gen_range(1..=15) {
            let p: Vec<f64> = (0..dim).map(|j| rng.gen_range(lo[j]..=hi[j])).collect();
            buffer.push(PruningPolicy::new(p).unwrap(), rng.gen_range(0.0..1.0));
        }
        let next =
            scaled_domain(&buffer, &from, &to, DomainMode::PerCluster, DOMAIN_FLOOR).unwrap();
        let outer = lift_domain(&previous, &from, &to).unwrap();
        for j in 0..to.count() {
            assert!(outer.lo()[j] <= next.lo()[j] && next.hi()[j] <= outer.hi()[j]);
        }
    }
}

#[test]
fn elite_buffer_keeps_the_best_in_order() {
    let mut buffer = EliteBuffer::new(3);
    let p = |v: f64| PruningPolicy::new(vec![v]).unwrap();
    assert!(buffer.push(p(0.1), 0.5));
    assert!(buffer.push(p(0.2), 0.7));
    assert!(buffer.push(p(0.3), 0.6));
    assert!(buffer.push(p(0.4), 0.65));
    assert!(!buffer.push(p(0.5), 0.1));
    let objectives: Vec<f64> = buffer.entries().iter().map(|(_, o)| *o).collect();
    assert_eq!(objectives, vec![0.7, 0.65, 0.6]);
    // Equal objectives keep insertion order.
    assert!(buffer.push(p(0.6), 0.65));
    assert_eq!(buffer.entries()[1].0.as_slice(), &[0.4]);
    assert_eq!(buffer.entries()[2].0.as_slice(), &[0.6]);
}

#[test]
fn widening_examples() {
    let domain = SearchDomain::new(vec![0.3, 0.05, 0.5], vec![0.4, 0.6, 1.0]).unwrap();
    // Interior bounds only: 0.05 is the floor and 1.0 the ceiling.
    assert_eq!(
        bounds_touched(&domain, &[0.3, 0.05, 1.0], DOMAIN_FLOOR).unwrap(),
        vec![(0, Bound::Lower)]
    );
    assert_eq!(
        bounds_touched(&domain, &[0.4, 0.6, 0.7], DOMAIN_FLOOR).unwrap(),
        vec![(0, Bound::Upper), (1, Bound::Upper)]
    );
    assert!(bounds_touched(&domain, &[0.35, 0.3, 0.7], DOMAIN_FLOOR)
        .unwrap()
        .is_empty());

    let wider = widen(
        &domain,
        &[(0, Bound::Lower), (1, Bound::Upper)],
        DOMAIN_FLOOR,
    )
    .unwrap();
    assert!((wider.lo()[0] - 0.2).abs() < 1e-12, "{:?}", wider.lo());
    assert_eq!(wider.hi()[0], 0.4);
    assert_eq!(wider.hi()[1], 1.0);
    assert_eq!(&wider.lo()[1..], &domain.lo()[1..]);

    // A degenerate interval opens by the minimum step.
    let point = SearchDomain::new(vec![0.5], vec![0.5]).unwrap();
    assert_eq!(
        bounds_touched(&point, &[0.5], DOMAIN_FLOOR).unwrap(),
        vec![(0, Bound::Lower), (0, Bound::Upper)]
    );
    let opened = widen(
        &point,
        &[(0, Bound::Lower), (0, Bound::Upper)],
        DOMAIN_FLOOR,
    )
    .unwrap();
    assert!((opened.lo()[0] - (0.5 - WIDEN_MIN_STEP)).abs() < 1e-12);
    assert!((opened.hi()[0] - (0.5 + WIDEN_MIN_STEP)).abs() < 1e-12);

    assert!(widen(&point, &[(1, Bound::Upper)], DOMAIN_FLOOR).is_err());
    assert!(bounds_touched(&point, &[0.5, 0.5], DOMAIN_FLOOR).is_err());
}

#[test]
fn seed_history_examples() {
    let from = ClusterAssignment::from_raw(&[0, 0, 1], (0..3).collect());
    let to = ClusterAssignment::singletons((0..3).collect());
    let empty = seed_history(&TrialHistory::new(2), &from, &to).unwrap();
    assert!(empty.is_empty());
    assert_eq!(empty.dim(), 3);

    let mut one = TrialHistory::new(2);
    one.push(TrialRecord {
        policy: PruningPolicy::new(vec![0.3, 0.8]).unwrap(),
        objective: 0.71,
        feasible: true,
        flops_ratio: 0.42,
        trial: 4,
    })
    .unwrap();
    let lifted = seed_history(&one, &from, &to).unwrap();
    assert_eq!(lifted.len(), 1);
    let r = &lifted.records()[0];
    assert_eq!(r.policy.as_slice(), &[0.3, 0.3, 0.8]);
    assert_eq!(
        (r.objective, r.feasible, r.flops_ratio, r.trial),
        (0.71, true, 0.42, 4)
    );
}

#[test]
fn seeded_history_gp_agrees_with_low_dimensional_gp() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let d = random_dendrogram(&mut rng, 12);
        let [from, to, _] = nested_cuts(&mut rng, &d);
        let kind = if rng.gen_bool(0.5) {
            KernelKind::SquaredExponential
        } else {
            KernelKind::Matern52
        };
        let low_scales: Vec<f64> = (0..from.count()).map(|_| rng.gen_range(0.2..1.5)).collect();
        let low = Hyperparameters {
            variance: rng.gen_range(0.05..1.0),
            length_scales: low_scales.clone(),
            noise: rng.gen_range(1e-4..1e-2),
        };
        // A parent scale shared by m children becomes sqrt(m) times longer
        // per child, so lifted distances equal low-dimensional ones.
        let parent = to.parents_in(&from).unwrap();
        let mut children = vec![0usize; from.count()];
        parent.iter().for_each(|&p| children[p] += 1);
        let high = Hyperparameters {
            length_scales: parent
                .iter()
                .map(|&p| low_scales[p] * (children[p] as f64).sqrt())
                .collect(),
            ..low.clone()
        };

        let mut history = TrialHistory::new(from.count());
        for t in 0..rng.gen_range(1..=20) {
            history
                .push(TrialRecord {
                    policy: random_policy(&mut rng, from.count()),
                    objective: rng.gen_range(0.3..0.9),
                    feasible: true,
                    flops_ratio: 0.5,
                    trial: t,
                })
                .unwrap();
        }
        let lifted = seed_history(&history, &from, &to).unwrap();
        let low_gp = GaussianProcessModel::with_hyperparameters(
            kind,
            low,
            &history.inputs(),
            &history.targets(),
        )
        .unwrap();
        let high_gp = GaussianProcessModel::with_hyperparameters(
            kind,
            high,
            &lifted.inputs(),
            &lifted.targets(),
        )
        .unwrap();
        for _ in 0..5 {
            let q = random_policy(&mut rng, from.count());
            let (m_low, v_low) = low_gp.posterior(q.as_slice()).unwrap();
            let (m_high, v_high) = high_gp
                .posterior(lift(&q, &from, &to).unwrap().as_slice())
                .unwrap();
            assert!((m_low - m_high).abs() < 1e-8, "{m_low} vs {m_high}");
            assert!((v_low - v_high).abs() < 1e-8, "{v_low} vs {v_high}");
        }
    }
}

#[test]
fn stage_plan_layout() {
    let net = common::net("resnet56");
    let d = build_dendrogram(&net.feature_matrix(true)).unwrap();
    let plan = StagePlan::new(&d, 3, &[9]).unwrap();
    assert_eq!(plan.stages(), &[3, 9, 28]);
    assert!(plan.is_last(2) && !plan.is_last(1));
    assert_eq!(StagePlan::new(&d, 28, &[]).unwrap().stages(), &[28]);
    assert_eq!(StagePlan::single(&d, 3).unwrap().stages(), &[3]);
    assert!(StagePlan::new(&d, 3, &[2]).is_err());
    assert!(StagePlan::new(&d, 3, &[40]).is_err());
    assert!(StagePlan::new(&d, 0, &[]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn widening_contains_the_old_box(seed in any::<u64>(), dim in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for _ in 0..dim {
            let a: f64 = rng.gen_range(DOMAIN_FLOOR..=1.0);
            let b: f64 = rng.gen_range(DOMAIN_FLOOR..=1.0);
            lo.push(a.min(b));
            hi.push(a.max(b));
        }
        let domain = SearchDomain::new(lo, hi).unwrap();
        let point: Vec<f64> = (0..dim)
            .map(|i| match rng.gen_range(0..3) {
                0 => domain.lo()[i],
                1 => domain.hi()[i],
                _ => rng.gen_range(domain.lo()[i]..=domain.hi()[i]),
            })
            .collect();
        let touched = bounds_touched(&domain, &point, DOMAIN_FLOOR).unwrap();
        let wider = widen(&domain, &touched, DOMAIN_FLOOR).unwrap();
        for i in 0..dim {
            prop_assert!(wider.lo()[i] <= domain.lo()[i] && wider.hi()[i] >= domain.hi()[i]);
            prop_assert!(wider.lo()[i] >= DOMAIN_FLOOR && wider.hi()[i] <= 1.0);
            let moved = wider.lo()[i] < domain.lo()[i] || wider.hi()[i] > domain.hi()[i];
            prop_assert_eq!(moved, touched.iter().any(|(j, _)| *j == i));
        }
    }

    #[test]
    fn stage_plan_is_nested_and_matches_cuts(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dendrogram(&mut rng, 30);
        let n = d.leaves().len();
        let clusters = rng.gen_range(1..=n);
        let mut bridges: Vec<usize> = (0..rng.gen_range(0..3))
            .map(|_| rng.gen_range(clusters..=n))
            .filter(|&b| b > clusters && b < n)
            .collect();
        bridges.sort_unstable();
        bridges.dedup();
        let plan = StagePlan::new(&d, clusters, &bridges).unwrap();
        prop_assert_eq!(*plan.stages().last().unwrap(), n);
        for (s, &c) in plan.stages().iter().enumerate() {
            prop_assert_eq!(plan.assignment(s), &d.cut(c).unwrap());
        }
        for pair in plan.assignments().windows(2) {
            prop_assert!(pair[1].refines(&pair[0]));
        }
    }
}
