use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use anyhow::{anyhow, bail, Result};
use clusterbo::controller::{run, run_naive, RunConfig};
use clusterbo::layer_model::NetworkDescriptor;
use clusterbo::report::{RunReport, RunStatus};

use crate::envsource::EnvSource;
use crate::output::{write_atomic, write_run};

/// The three searches compared side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Per-layer search from the start.
    Naive,
    /// Clustered search that never leaves the cluster space.
    ClusterOnly,
    /// Clustered search with rollback through the configured stages.
    Rollback,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Naive, Variant::ClusterOnly, Variant::Rollback];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Naive => "naive",
            Variant::ClusterOnly => "cluster",
            Variant::Rollback => "rollback",
        }
    }

    pub fn execute(
        self,
        net: &NetworkDescriptor,
        env: &mut dyn clusterbo::environment::Environment,
        config: &RunConfig,
    ) -> clusterbo::Result<RunReport> {
        match self {
            Variant::Naive => run_naive(net, env, config),
            Variant::ClusterOnly => run(
                net,
                env,
                &RunConfig {
                    rollback: false,
                    ..config.clone()
                },
            ),
            Variant::Rollback => run(
                net,
                env,
                &RunConfig {
                    rollback: true,
                    ..config.clone()
                },
            ),
        }
    }
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trials needed (1-based count) until the best-so-far first reaches
/// `fraction` of the run's own final best.
pub fn trials_to_fraction(report: &RunReport, fraction: f64) -> Option<usize> {
    let target = fraction * report.best_objective()?;
    report
        .trials
        .iter()
        .position(|t| t.best_so_far.is_some_and(|b| b >= target))
        .map(|i| i + 1)
}

#[derive(Debug, Clone)]
pub struct VariantSummary {
    pub variant: Variant,
    /// One report per seed, in seed order.
    pub reports: Vec<RunReport>,
    pub final_best: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Trials to reach 95% of each run's own final best.
    pub t95: Vec<usize>,
    /// Per-trial mean and standard deviation of best-so-far across seeds;
    /// `None` while some seed has no feasible evaluation yet.
    pub curve: Vec<Option<(f64, f64)>>,
}

impl VariantSummary {
    fn new(variant: Variant, reports: Vec<RunReport>) -> Result<Self> {
        let final_best = reports
            .iter()
            .map(|r| {
                r.best_objective()
                    .ok_or_else(|| anyhow!("{} run found no feasible policy", variant.name()))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (mean, std) = mean_std(&final_best);
        let t95 = reports
            .iter()
            .map(|r| trials_to_fraction(r, 0.95).unwrap_or(usize::MAX))
            .collect();
        let len = reports.iter().map(|r| r.trials.len()).min().unwrap_or(0);
        let curve = (0..len)
            .map(|i| {
                let column: Option<Vec<f64>> =
                    reports.iter().map(|r| r.trials[i].best_so_far).collect();
                column.map(|c| mean_std(&c))
            })
            .collect();
        Ok(Self {
            variant,
            reports,
            final_best,
            mean,
            std,
            t95,
            curve,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub variants: Vec<VariantSummary>,
}

impl Comparison {
    pub fn variant(&self, variant: Variant) -> &VariantSummary {
        self.variants
            .iter()
            .find(|v| v.variant == variant)
            .expect("all variants are run")
    }

    /// `trial,<variant>_mean,<variant>_std,...`
    pub fn curves_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["trial".to_string()];
        for v in &self.variants {
            header.push(format!("{}_mean", v.variant.name()));
            header.push(format!("{}_std", v.variant.name()));
        }
        w.write_record(&header)?;
        let len = self
            .variants
            .iter()
            .map(|v| v.curve.len())
            .min()
            .unwrap_or(0);
        for i in 0..len {
            let mut row = vec![i.to_string()];
            for v in &self.variants {
                match v.curve[i] {
                    Some((m, s)) => {
                        row.push(m.to_string());
                        row.push(s.to_string());
                    }
                    None => row.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&row)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "variant",
            "seeds",
            "mean_final_best",
            "std_final_best",
            "min",
            "max",
            "mean_t95",
        ])?;
        for v in &self.variants {
            let min = v.final_best.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v
                .final_best
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let t95: Vec<f64> = v.t95.iter().map(|&t| t as f64).collect();
            w.write_record([
                v.variant.name().to_string(),
                v.final_best.len().to_string(),
                v.mean.to_string(),
                v.std.to_string(),
                min.to_string(),
                max.to_string(),
                mean_std(&t95).0.to_string(),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    pub fn summary_table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>6} {:>10} {:>10} {:>10}\n",
            "variant", "seeds", "mean", "std", "mean t95"
        );
        for v in &self.variants {
            let t95: Vec<f64> = v.t95.iter().map(|&t| t as f64).collect();
            out.push_str(&format!(
                "{:<10} {:>6} {:>10.5} {:>10.5} {:>10.1}\n",
                v.variant.name(),
                v.final_best.len(),
                v.mean,
                v.std,
                mean_std(&t95).0
            ));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("curves.csv"), self.curves_csv()?.as_bytes())?;
        write_atomic(&dir.join("summary.csv"), self.summary_csv()?.as_bytes())?;
        Ok(())
    }
}

/// Runs every variant for `seeds` consecutive seeds starting at
/// `config.seed`. Independent runs are spread over the available cores;
/// results do not depend on scheduling. With `out`, each run's files go to
/// `out/<variant>/seed-<seed>/`.
pub fn compare(
    net: &NetworkDescriptor,
    source: &EnvSource,
    config: &RunConfig,
    seeds: usize,
    timeout: Duration,
    out: Option<&Path>,
) -> Result<Comparison> {
    if seeds == 0 {
        bail!("at least one seed is required");
    }
    let seed_list: Vec<u64> = (0..seeds as u64).map(|k| config.seed + k).collect();
    let jobs: Vec<(usize, u64)> = (0..Variant::ALL.len())
        .flat_map(|v| seed_list.iter().map(move |&s| (v, s)))
        .collect();
    let results: Mutex<Vec<Option<Result<RunReport>>>> =
        Mutex::new(jobs.iter().map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len());

    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(v, seed)) = jobs.get(job) else {
                    break;
                };
                let variant = Variant::ALL[v];
                let outcome = (|| -> Result<RunReport> {
                    let mut env = source.open(net, timeout)?;
                    let report = variant.execute(
                        net,
                        env.as_mut(),
                        &RunConfig {
                            seed,
                            ..config.clone()
                        },
                    )?;
                    if let Some(dir) = out {
                        write_run(
                            &report,
                            &dir.join(variant.name()).join(format!("seed-{seed}")),
                        )?;
                    }
                    if let RunStatus::Failed { message, .. } = &report.status {
                        bail!("{} run with seed {seed} failed: {message}", variant.name());
                    }
                    Ok(report)
                })();
                results.lock().unwrap()[job] = Some(outcome);
            });
        }
    });

    let mut results = results.into_inner().unwrap().into_iter();
    let mut variants = Vec::new();
    for variant in Variant::ALL {
        let reports = results
            .by_ref()
            .take(seed_list.len())
            .map(|r| r.expect("every job ran"))
            .collect::<Result<Vec<_>>>()?;
        variants.push(VariantSummary::new(variant, reports)?);
    }
    let comparison = Comparison {
        seeds: seed_list,
        variants,
    };
    if let Some(dir) = out {
        comparison.write(dir)?;
    }
    Ok(comparison)
}
