use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use clusterbo::clustering::build_dendrogram;
use clusterbo::controller::{run, run_naive, RunConfig};
use clusterbo::environment::{GeneratorConfig, SyntheticEnvSpec};
use clusterbo::layer_model::NetworkDescriptor;
use clusterbo::report::RunStatus;

use crate::compare::compare;
use crate::config::load_config;
use crate::envsource::EnvSource;
use crate::output::{write_atomic, write_run};

#[derive(Debug, Parser)]
#[command(
    name = "clusterbo",
    version,
    about = "Layer-wise pruning policy search with layer clustering and rollback"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one search and write report.json, trials.log and curve.csv.
    Run {
        /// TOML run configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        net: PathBuf,
        /// synthetic:<spec.json> or external:<command>
        #[arg(long)]
        env: EnvSource,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Per-layer search without clustering or rollback.
        #[arg(long, conflicts_with = "no_rollback")]
        naive: bool,
        /// Stay in the cluster space for the whole run.
        #[arg(long)]
        no_rollback: bool,
        /// Seconds to wait for each external evaluation.
        #[arg(long, default_value_t = 3600)]
        env_timeout: u64,
    },
    /// Print a cluster assignment and write the dendrogram.
    Cluster {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        clusters: usize,
        /// Cluster on unnormalized features.
        #[arg(long)]
        raw_features: bool,
        /// Directory for dendrogram.txt and clusters.txt.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run naive, cluster-only and rollback searches over several seeds.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        env: EnvSource,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3600)]
        env_timeout: u64,
    },
    /// Generate a synthetic environment spec for a network.
    GenEnv {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, value_enum)]
        kind: SpecKind,
        /// Number of layer groups sharing parameters (block kind only).
        #[arg(long, required_if_eq("kind", "block"))]
        clusters: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evaluation noise standard deviation.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpecKind {
    /// Layers in one dendrogram cluster share sensitivity up to jitter.
    Block,
    /// Every layer draws its own sensitivity.
    Uncorrelated,
}

fn load_net(path: &Path) -> Result<NetworkDescriptor> {
    NetworkDescriptor::load(path).with_context(|| format!("loading network {}", path.display()))
}

fn config_or_default(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), load_config)
}

/// Executes a parsed command, writing human-readable output to `stdout`.
pub fn execute(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Run {
            config,
            net,
            env,
            out,
            seed,
            naive,
            no_rollback,
            env_timeout,
        } => {
            let net = load_net(&net)?;
            let mut config = config_or_default(config.as_deref())?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if no_rollback {
                config.rollback = false;
            }
            let mut environment = env.open(&net, Duration::from_secs(env_timeout))?;
            let report = if naive {
                run_naive(&net, environment.as_mut(), &config)?
            } else {
                run(&net, environment.as_mut(), &config)?
            };
            write_run(&report, &out)?;
            if let RunStatus::Failed { message, payload } = &report.status {
                let detail = payload
                    .as_ref()
                    .map(|p| format!(" (payload: {p})"))
                    .unwrap_or_default();
                bail!(
                    "run failed after {} trials: {message}{detail}; partial results in {}",
                    report.trials.len(),
                    out.display()
                );
            }
            match &report.best {
                Some(best) => {
                    writeln!(
                        stdout,
                        "best objective {} at trial {}",
                        best.objective, best.trial
                    )?;
                    writeln!(stdout, "flops ratio {}", best.flops_ratio)?;
                    let policy: Vec<String> = best
                        .policy
                        .as_slice()
                        .iter()
                        .map(|p| format!("{p:.4}"))
                        .collect();
                    writeln!(stdout, "policy {}", policy.join(","))?;
                }
                None => writeln!(stdout, "no feasible policy found")?,
            }
            Ok(())
        }
        Command::Cluster {
            net,
            clusters,
            raw_features,
            out,
        } => {
            let net = load_net(&net)?;
            let dendrogram = build_dendrogram(&net.feature_matrix(!raw_features))?;
            let assignment = dendrogram.cut(clusters)?;
            write_atomic(&out.join("dendrogram.txt"), dendrogram.to_text().as_bytes())?;
            write_atomic(&out.join("clusters.txt"), assignment.to_text().as_bytes())?;
            writeln!(
                stdout,
                "{} clusters over {} prunable layers",
                assignment.count(),
                assignment.len()
            )?;
            let layers = assignment.layer_indices();
            for (id, members) in assignment.clusters().iter().enumerate() {
                let names: Vec<String> = members.iter().map(|&m| layers[m].to_string()).collect();
                writeln!(stdout, "cluster {id}: layers {}", names.join(" "))?;
            }
            Ok(())
        }
        Command::Compare {
            config,
            net,
            env,
            seeds,
            out,
            env_timeout,
        } => {
            let net = load_net(&net)?;
            let config = config_or_default(config.as_deref())?;
            let comparison = compare(
                &net,
                &env,
                &config,
                seeds,
                Duration::from_secs(env_timeout),
                Some(&out),
            )?;
            write!(stdout, "{}", comparison.summary_table())?;
            Ok(())
        }
        Command::GenEnv {
            net,
            kind,
            clusters,
            seed,
            noise,
            out,
        } => {
            let net = load_net(&net)?;
            let mut generator = GeneratorConfig::default();
            if let Some(noise) = noise {
                generator.noise = noise;
            }
            let spec = match kind {
                SpecKind::Block => {
                    let count = clusters.expect("clap requires --clusters for block specs");
                    let groups = build_dendrogram(&net.feature_matrix(true))?.cut(count)?;
                    SyntheticEnvSpec::block_correlated(groups.labels(), &generator, seed)
                }
                SpecKind::Uncorrelated => {
                    SyntheticEnvSpec::uncorrelated(net.dimension(), &generator, seed)
                }
            };
            spec.validate()?;
            let mut text = serde_json::to_string_pretty(&spec)?;
            text.push('\n');
            write_atomic(&out, text.as_bytes())?;
            writeln!(stdout, "wrote {} ({} layers)", out.display(), spec.dim())?;
            Ok(())
        }
    }
}
