//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints exactly one PASS/FAIL line, then exits non-zero if
//! any failed. Criteria 7 and 8 run full comparative studies and dominate the
//! runtime.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clusterbo::acquisition::{expected_improvement_from_moments, SearchDomain};
use clusterbo::clustering::{build_dendrogram, ClusterAssignment, Dendrogram};
use clusterbo::controller::RunConfig;
use clusterbo::environment::project_feasible;
use clusterbo::gp::{
    GaussianProcessModel, Hyperparameters, KernelKind, PruningPolicy, TrialHistory, TrialRecord,
    JITTER,
};
use clusterbo::layer_model::{FeatureMatrix, NetworkDescriptor, FEATURE_COUNT};
use clusterbo::projection::{
    lift, scaled_domain, seed_history, DomainMode, EliteBuffer, DOMAIN_FLOOR, ELITE_CAPACITY,
};
use clusterbo::Error;
use clusterbo_cli::{compare, execute, load_config, Command, EnvSource, Variant};
use clusterbo_oracle::{ei as ei_oracle, gp as gp_oracle, ward as ward_oracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one criterion: pass flag and a one-line summary.
type Outcome = (bool, String);

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(rel)
}

fn net(name: &str) -> NetworkDescriptor {
    NetworkDescriptor::load(data(&format!("nets/{name}.net"))).unwrap()
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

fn unit_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(0.05..=1.0)).collect())
        .collect()
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; FEATURE_COUNT]> {
    (0..n)
        .map(|_| {
            let mut r = [0.0; FEATURE_COUNT];
            r.iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
            r
        })
        .collect()
}

fn random_dendrogram(rng: &mut ChaCha8Rng, max_n: usize) -> Dendrogram {
    let n = rng.gen_range(2..=max_n);
    build_dendrogram(&FeatureMatrix::from_rows(random_rows(rng, n))).unwrap()
}

/// Cuts with cluster counts `a <= b <= c`.
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
    PruningPolicy::new(unit_points(rng, 1, dim).remove(0)).unwrap()
}

fn gp_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut elapsed = Duration::ZERO;
    for _ in 0..200 {
        let dim = rng.gen_range(1..=10);
        let n = rng.gen_range(1..=50);
        let (kind, oracle_kind) = if rng.gen_bool(0.5) {
            (
                KernelKind::SquaredExponential,
                gp_oracle::Kernel::SquaredExponential,
            )
        } else {
            (KernelKind::Matern52, gp_oracle::Kernel::Matern52)
        };
        let hyper = Hyperparameters {
            variance: log_uniform(&mut rng, 0.05, 2.0),
            length_scales: (0..dim).map(|_| log_uniform(&mut rng, 0.1, 2.0)).collect(),
            noise: log_uniform(&mut rng, 1e-4, 1e-1),
        };
        let xs = unit_points(&mut rng, n, dim);
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..0.95)).collect();
        let queries = unit_points(&mut rng, 5, dim);
        let params = gp_oracle::Params {
            kernel: oracle_kind,
            variance: hyper.variance,
            length_scales: hyper.length_scales.clone(),
            noise: hyper.noise,
            jitter: JITTER,
        };

        let started = Instant::now();
        let model = GaussianProcessModel::with_hyperparameters(kind, hyper, &xs, &ys).unwrap();
        let ours: Vec<(f64, f64)> = queries
            .iter()
            .map(|q| model.posterior(q).unwrap())
            .collect();
        elapsed += started.elapsed();

        for (q, (mean, var)) in queries.iter().zip(ours) {
            let (om, ov) = gp_oracle::posterior(&params, &xs, &ys, q);
            worst = worst.max((mean - om).abs()).max((var - ov).abs());
        }
    }
    let pass = worst <= 1e-8 && elapsed < Duration::from_secs(10);
    (
        pass,
        format!(
            "200 instances, max |error| {worst:.2e} (tol 1e-8), {:.3}s (limit 10s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn ei_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst_z: f64 = 0.0;
    let mut negative = 0;
    for case in 0..100 {
        let mean = rng.gen_range(-1.0..1.0);
        let sigma = log_uniform(&mut rng, 1e-3, 2.0);
        let best = mean + sigma * rng.gen_range(-3.0..3.0);
        let ei = expected_improvement_from_moments(mean, sigma, best);
        if ei < 0.0 {
            negative += 1;
        }
        let (mc, se) = ei_oracle::monte_carlo(mean, sigma, best, 1_000_000, 1000 + case);
        worst_z = worst_z.max((ei - mc).abs() / se.max(f64::MIN_POSITIVE));
    }
    let pass = worst_z <= 4.0 && negative == 0;
    (pass, format!("100 triples, worst deviation {worst_z:.2} standard errors (limit 4), {negative} negative values"))
}

fn clustering_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=8);
        let rows = random_rows(&mut rng, n);
        let d = build_dendrogram(&FeatureMatrix::from_rows(rows.clone())).unwrap();
        let points: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        for c in 1..=n {
            if d.cut(c).unwrap().labels() != ward_oracle::partition(&points, c).as_slice() {
                mismatches += 1;
            }
        }
    }
    let mut unnested = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=30);
        let d = build_dendrogram(&FeatureMatrix::from_rows(random_rows(&mut rng, n))).unwrap();
        let cuts: Vec<_> = (1..=n).map(|c| d.cut(c).unwrap()).collect();
        for (i, coarse) in cuts.iter().enumerate() {
            unnested += cuts[i..]
                .iter()
                .filter(|fine| !fine.refines(coarse))
                .count();
        }
    }
    let pass = mismatches == 0 && unnested == 0;
    (pass, format!("{mismatches} cuts differ from brute force (N<=8), {unnested} non-nested cut pairs in 1000 instances (N<=30)"))
}

fn resnet_structure() -> Outcome {
    // Residual blocks are the runs of prunable layers with equal width.
    let text = std::fs::read_to_string(data("nets/resnet56.net")).unwrap();
    let mut blocks: Vec<(String, Vec<String>)> = Vec::new();
    for line in text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("name"))
    {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 8 || f[7] != "yes" {
            continue;
        }
        match blocks.last_mut() {
            Some((width, members)) if width == f[3] => members.push(f[0].to_string()),
            _ => blocks.push((f[3].to_string(), vec![f[0].to_string()])),
        }
    }
    let expected: Vec<String> = blocks.iter().map(|(_, m)| m.join(" ")).collect();

    let out = tempfile::tempdir().unwrap();
    let mut stdout = Vec::new();
    let started = Instant::now();
    execute(
        Command::Cluster {
            net: data("nets/resnet56.net"),
            clusters: 3,
            raw_features: false,
            out: out.path().to_path_buf(),
        },
        &mut stdout,
    )
    .unwrap();
    let elapsed = started.elapsed();
    let got: Vec<String> = String::from_utf8(stdout)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(": layers ").map(|(_, m)| m.to_string()))
        .collect();
    let pass = got == expected && elapsed < Duration::from_secs(1);
    (
        pass,
        format!(
            "clusters {:?} vs blocks of sizes {:?}, {:.3}s (limit 1s)",
            got.iter().map(|g| g.split(' ').count()).collect::<Vec<_>>(),
            blocks.iter().map(|(_, m)| m.len()).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    )
}

fn rollback_mechanics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut outside = 0;
    let mut composition = 0;
    for _ in 0..1000 {
        let d = random_dendrogram(&mut rng, 30);
        let [from, to, finest] = nested_cuts(&mut rng, &d);
        let mut buffer = EliteBuffer::new(ELITE_CAPACITY);
        for _ in 0..rng.gen_range(1..=25) {
            let objective = rng.gen_range(0.0..1.0);
            buffer.push(random_policy(&mut rng, from.count()), objective);
        }
        for mode in [DomainMode::PerCluster, DomainMode::Global] {
            let domain = scaled_domain(&buffer, &from, &to, mode, DOMAIN_FLOOR).unwrap();
            outside += buffer
                .entries()
                .iter()
                .filter(|(p, _)| !domain.contains(lift(p, &from, &to).unwrap().as_slice()))
                .count();
        }
        let p = random_policy(&mut rng, from.count());
        let direct = lift(&p, &from, &finest).unwrap();
        let stepwise = lift(&lift(&p, &from, &to).unwrap(), &to, &finest).unwrap();
        if direct != stepwise {
            composition += 1;
        }
    }

    let mut worst: f64 = 0.0;
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
        // Shared hyperparameters: a parent scale split over m children is
        // sqrt(m) times longer per child.
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
        for trial in 0..rng.gen_range(1..=20) {
            history
                .push(TrialRecord {
                    policy: random_policy(&mut rng, from.count()),
                    objective: rng.gen_range(0.3..0.9),
                    feasible: true,
                    flops_ratio: 0.5,
                    trial,
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
            let (ml, vl) = low_gp.posterior(q.as_slice()).unwrap();
            let (mh, vh) = high_gp
                .posterior(lift(&q, &from, &to).unwrap().as_slice())
                .unwrap();
            worst = worst.max((ml - mh).abs()).max((vl - vh).abs());
        }
    }
    let pass = outside == 0 && composition == 0 && worst <= 1e-8;
    (pass, format!("{outside} lifted elites outside their box, {composition} composition mismatches, seeded GP max |error| {worst:.2e} (tol 1e-8)"))
}

fn constraint_repair() -> Outcome {
    let chain = NetworkDescriptor::parse(
        "name chain\n0 conv 1 512 1 16 16 yes input\n1 conv 512 512 3 16 16 yes 0\n",
    )
    .unwrap();
    let domain = SearchDomain::full(2, DOMAIN_FLOOR).unwrap();
    let repaired = project_feasible(
        &chain,
        &PruningPolicy::uniform(2, 1.0).unwrap(),
        0.5,
        &domain,
    )
    .unwrap();
    let p = repaired.as_slice();
    let error = (p[0] - 0.5f64.sqrt()).abs();
    let uniform = p[0] == p[1];

    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut infeasible = 0;
    let mut checked = 0;
    for name in ["resnet56", "mobilenetv1", "mobilenetv2", "vgg16"] {
        let net = net(name);
        let n = net.dimension();
        let domain = SearchDomain::full(n, DOMAIN_FLOOR).unwrap();
        for _ in 0..250 {
            let target = rng.gen_range(0.05..0.95);
            let policy = random_policy(&mut rng, n);
            match project_feasible(&net, &policy, target, &domain) {
                Ok(r) => {
                    checked += 1;
                    if net.flops_ratio(r.as_slice()).unwrap() > target
                        || !domain.contains(r.as_slice())
                    {
                        infeasible += 1;
                    }
                }
                Err(Error::TargetUnreachable { lower_ratio, .. }) if lower_ratio > target => {}
                Err(_) => infeasible += 1,
            }
        }
    }
    let pass = uniform && error <= 1e-4 && infeasible == 0;
    (pass, format!("chain repair ({:.6}, {:.6}), |p - sqrt(0.5)| {error:.2e} (tol 1e-4); {infeasible} infeasible of {checked} repaired policies", p[0], p[1]))
}

fn comparative_claim() -> Outcome {
    let net = net("resnet56");
    let config: RunConfig = load_config(&data("configs/resnet56.toml")).unwrap();
    let source = EnvSource::Synthetic(data("envs/resnet56-block.json"));
    let started = Instant::now();
    let result = compare(&net, &source, &config, 10, Duration::from_secs(60), None).unwrap();
    let elapsed = started.elapsed();
    let naive = result.variant(Variant::Naive);
    let cluster = result.variant(Variant::ClusterOnly);
    let rollback = result.variant(Variant::Rollback);
    let faster = cluster
        .t95
        .iter()
        .zip(&naive.t95)
        .filter(|(c, n)| c < n)
        .count();
    let a = faster >= 8;
    let b = rollback.mean >= cluster.mean;
    let c = rollback.std <= naive.std;
    let timely = elapsed < Duration::from_secs(15 * 60);
    (
        a && b && c && timely,
        format!(
            "(a) cluster-only faster to 95% in {faster}/10 seeds [{}]; (b) rollback mean {:.5} vs cluster-only {:.5} [{}]; (c) rollback std {:.5} vs naive {:.5} [{}]; naive mean {:.5}; {:.0}s (limit 900s)",
            verdict(a), rollback.mean, cluster.mean, verdict(b), rollback.std, naive.std, verdict(c), naive.mean, elapsed.as_secs_f64()
        ),
    )
}

fn adversarial_spec() -> Outcome {
    let net = net("mobilenetv2");
    let config = load_config(&data("configs/mobilenetv2.toml")).unwrap();
    let source = EnvSource::Synthetic(data("envs/mobilenetv2-uncorrelated.json"));
    let result = compare(&net, &source, &config, 10, Duration::from_secs(60), None).unwrap();
    let naive = result.variant(Variant::Naive);
    let cluster = result.variant(Variant::ClusterOnly);
    let rollback = result.variant(Variant::Rollback);
    (
        rollback.mean >= naive.mean,
        format!(
            "rollback mean {:.5} (std {:.5}) vs naive {:.5} (std {:.5}); cluster-only {:.5}",
            rollback.mean, rollback.std, naive.mean, naive.std, cluster.mean
        ),
    )
}

fn replay_determinism() -> Outcome {
    let mut identical = 0;
    let cases = [false, true];
    for naive in cases {
        let logs: Vec<Vec<u8>> = (0..2)
            .map(|_| {
                let out = tempfile::tempdir().unwrap();
                execute(
                    Command::Run {
                        config: Some(data("configs/vgg16.toml")),
                        net: data("nets/vgg16.net"),
                        env: EnvSource::Synthetic(data("envs/vgg16-block.json")),
                        out: out.path().to_path_buf(),
                        seed: Some(5),
                        naive,
                        no_rollback: false,
                        env_timeout: 60,
                    },
                    &mut Vec::new(),
                )
                .unwrap();
                std::fs::read(out.path().join("trials.log")).unwrap()
            })
            .collect();
        if logs[0] == logs[1] && !logs[0].is_empty() {
            identical += 1;
        }
    }
    (
        identical == cases.len(),
        format!(
            "{identical}/{} reruns reproduced trials.log byte for byte",
            cases.len()
        ),
    )
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("GP correctness", gp_correctness),
        ("EI correctness", ei_correctness),
        ("clustering fidelity", clustering_fidelity),
        ("ResNet56 structure", resnet_structure),
        ("rollback mechanics", rollback_mechanics),
        ("constraint repair", constraint_repair),
        ("comparative claim", comparative_claim),
        ("adversarial spec", adversarial_spec),
        ("determinism and replay", replay_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let message = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {message}"))
        });
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name}: {detail}",
            i + 1,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
