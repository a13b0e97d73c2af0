//! The search loop: Sobol start in cluster space, GP + expected improvement,
//! and rollback toward layer space when a stage stalls or runs out of budget.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{maximize_acquisition_with, AcquisitionConfig, SearchDomain, SobolStream};
use crate::clustering::{build_dendrogram, ClusterAssignment};
use crate::environment::{repair_with, Environment, Evaluation};
use crate::error::{Error, Result};
use crate::gp::{fit, KernelConfig, PruningPolicy, TrialHistory, TrialRecord};
use crate::layer_model::{FlopsPolynomial, NetworkDescriptor};
use crate::projection::{
    bounds_touched, lift_domain, scaled_domain, seed_history, to_layers, widen, DomainMode,
    EliteBuffer, StagePlan, DOMAIN_FLOOR, ELITE_CAPACITY,
};
use crate::report::{
    BestPolicy, PlanEntry, RollbackReason, RunReport, RunStatus, TransitionEntry, TrialEntry,
    TrialSource, WideningEntry,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Upper bound `p_t` on the pruned/original FLOPs ratio.
    pub target_flops_ratio: f64,
    /// Cluster count of the first stage; `None` searches layer space directly.
    pub cluster_count: Option<usize>,
    /// Bridge cluster counts visited between the first stage and layer space.
    pub stage_plan: Vec<usize>,
    /// When false the run stays in the first stage.
    pub rollback: bool,
    pub total_trials: usize,
    pub init_samples: usize,
    pub stall_trials: usize,
    pub stage_trial_cap: usize,
    /// Objective gain below which the incumbent counts as unchanged.
    pub improvement_tolerance: f64,
    pub seed: u64,
    pub domain_mode: DomainMode,
    pub domain_floor: f64,
    pub elite_capacity: usize,
    /// After a rollback, push the bounds of the scaled box outward when an
    /// acquisition trial on them beats the incumbent by more than the fitted
    /// noise standard deviation.
    pub widen_domain: bool,
    /// Cluster on unnormalized layer features.
    pub raw_features: bool,
    pub kernel: KernelConfig,
    pub acquisition: AcquisitionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            target_flops_ratio: 0.5,
            cluster_count: None,
            stage_plan: Vec::new(),
            rollback: true,
            total_trials: 200,
            init_samples: 10,
            stall_trials: 20,
            stage_trial_cap: 100,
            improvement_tolerance: 1e-4,
            seed: 0,
            domain_mode: DomainMode::PerCluster,
            domain_floor: DOMAIN_FLOOR,
            elite_capacity: ELITE_CAPACITY,
            widen_domain: true,
            raw_features: false,
            kernel: KernelConfig::default(),
            acquisition: AcquisitionConfig::default(),
        }
    }
}

impl RunConfig {
    /// The first-stage cluster count for a network with `n` prunable layers.
    pub fn clusters_for(&self, n: usize) -> usize {
        self.cluster_count.unwrap_or(n)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let p_t = self.target_flops_ratio;
        if !(p_t > 0.0 && p_t < 1.0) {
            return fail(format!("target_flops_ratio {p_t} is outside (0, 1)"));
        }
        let c = self.clusters_for(n);
        if c < 1 || c > n {
            return Err(Error::ClusterCount {
                requested: c,
                max: n,
            });
        }
        let mut prev = c;
        for &b in &self.stage_plan {
            if b <= prev || b >= n {
                return fail(format!(
                    "stage_plan must be strictly increasing within ({c}, {n}), got {:?}",
                    self.stage_plan
                ));
            }
            prev = b;
        }
        if !(self.stall_trials < self.stage_trial_cap && self.stage_trial_cap <= self.total_trials)
        {
            return fail("need stall_trials < stage_trial_cap <= total_trials".into());
        }
        if self.init_samples == 0 || self.init_samples > self.total_trials {
            return fail("init_samples must lie in [1, total_trials]".into());
        }
        if !(self.domain_floor > 0.0 && self.domain_floor <= 1.0) {
            return fail(format!(
                "domain_floor {} is outside (0, 1]",
                self.domain_floor
            ));
        }
        if !(self.improvement_tolerance >= 0.0) {
            return fail("improvement_tolerance must be non-negative".into());
        }
        if self.elite_capacity == 0 {
            return fail("elite_capacity must be positive".into());
        }
        self.kernel.validate()
    }
}

/// Mutable search state. `best` is always a layer-space policy.
#[derive(Debug, Clone)]
pub struct RunState {
    pub stage: usize,
    pub history: TrialHistory,
    pub elites: EliteBuffer,
    pub best: Option<(PruningPolicy, f64)>,
    /// Trials evaluated so far in the whole run.
    pub trial: usize,
    pub trials_in_stage: usize,
    pub trials_since_improvement: usize,
    rng: ChaCha8Rng,
}

impl RunState {
    pub fn new(dim: usize, elite_capacity: usize, seed: u64) -> Self {
        Self {
            stage: 0,
            history: TrialHistory::new(dim),
            elites: EliteBuffer::new(elite_capacity),
            best: None,
            trial: 0,
            trials_in_stage: 0,
            trials_since_improvement: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.best.as_ref().map(|(_, o)| *o)
    }

    /// Books one evaluation against the stage counters and the incumbent.
    fn observe(&mut self, layer_policy: &PruningPolicy, eval: &Evaluation, tolerance: f64) {
        self.trial += 1;
        self.trials_in_stage += 1;
        self.trials_since_improvement += 1;
        if !eval.feasible {
            return;
        }
        let previous = self.best_objective();
        if previous.is_none_or(|b| eval.objective > b + tolerance) {
            self.trials_since_improvement = 0;
        }
        if previous.is_none_or(|b| eval.objective > b) {
            self.best = Some((layer_policy.clone(), eval.objective));
        }
    }

    fn enter_stage(&mut self, stage: usize, history: TrialHistory) {
        self.stage = stage;
        self.history = history;
        self.elites.clear();
        self.trials_in_stage = 0;
        self.trials_since_improvement = 0;
    }
}

/// Why the current stage should end, if it should.
pub fn rollback_reason(state: &RunState, config: &RunConfig) -> Option<RollbackReason> {
    if state.trials_since_improvement > config.stall_trials {
        Some(RollbackReason::Stall)
    } else if state.trials_in_stage >= config.stage_trial_cap {
        Some(RollbackReason::StageCap)
    } else {
        None
    }
}

/// True when the incumbent has been unchanged for more than `stall_trials`
/// trials of this stage or the stage has used `stage_trial_cap` trials.
pub fn should_rollback(state: &RunState, config: &RunConfig) -> bool {
    rollback_reason(state, config).is_some()
}

/// Stage-space policy mapped onto layers.
fn layers_of(x: &[f64], assignment: &ClusterAssignment) -> Vec<f64> {
    assignment.labels().iter().map(|&l| x[l]).collect()
}

fn sobol_stream(dim: usize, rng: &mut ChaCha8Rng) -> Result<SobolStream> {
    let mut shift = ChaCha8Rng::seed_from_u64(rng.gen());
    SobolStream::with_digital_shift(dim, &mut shift)
}

/// Candidate for the next trial in the current stage: a stream point while
/// `sobol_left > 0`, else the expected-improvement maximizer.
struct Proposal {
    policy: PruningPolicy,
    source: TrialSource,
    acquisition: Option<f64>,
    model: Option<crate::gp::Hyperparameters>,
}

fn propose(
    state: &mut RunState,
    stream: &mut SobolStream,
    sobol_left: &mut usize,
    domain: &SearchDomain,
    flops: &FlopsPolynomial,
    config: &RunConfig,
) -> Result<Proposal> {
    if *sobol_left > 0 || state.history.is_empty() {
        *sobol_left = sobol_left.saturating_sub(1);
        return Ok(Proposal {
            policy: stream.next_in(domain)?,
            source: TrialSource::Sobol,
            acquisition: None,
            model: None,
        });
    }
    let gp_seed: u64 = state.rng.gen();
    let acq_seed: u64 = state.rng.gen();
    let model = fit(&state.history, &config.kernel, gp_seed)?;
    let incumbent = state
        .history
        .best_feasible()
        .map(|r| r.objective)
        .unwrap_or_else(|| {
            state
                .history
                .records()
                .iter()
                .map(|r| r.objective)
                .fold(f64::NEG_INFINITY, f64::max)
        });
    let p_t = config.target_flops_ratio;
    let repair = |x: &[f64]| repair_with(|y| Ok(flops.ratio(y)), x, p_t, domain);
    let best = maximize_acquisition_with(
        &model,
        domain,
        incumbent,
        acq_seed,
        &config.acquisition,
        repair,
    )?;
    Ok(Proposal {
        policy: PruningPolicy::new(best.proposal)?,
        source: TrialSource::Acquisition,
        acquisition: Some(best.value),
        model: Some(model.hyperparameters().clone()),
    })
}

struct Recorder {
    report: RunReport,
}

impl Recorder {
    fn fail(mut self, error: Error) -> RunReport {
        let (message, payload) = match &error {
            Error::Environment { message, payload } => (message.clone(), payload.clone()),
            other => (other.to_string(), None),
        };
        self.report.status = RunStatus::Failed { message, payload };
        self.report
    }
}

/// Repairs, evaluates and books one proposal.
#[allow(clippy::too_many_arguments)]
fn trial<E: Environment + ?Sized>(
    net: &NetworkDescriptor,
    env: &mut E,
    config: &RunConfig,
    state: &mut RunState,
    assignment: &ClusterAssignment,
    domain: &SearchDomain,
    proposal: Proposal,
    recorder: &mut Recorder,
    started: Instant,
) -> Result<()> {
    let p_t = config.target_flops_ratio;
    let policy = PruningPolicy::new(repair_with(
        |x| net.flops_ratio(&layers_of(x, assignment)),
        proposal.policy.as_slice(),
        p_t,
        domain,
    )?)?;
    let layer_policy = to_layers(&policy, assignment)?;
    let eval = env.evaluate(net, &layer_policy, p_t)?;
    let index = state.trial;
    state.history.push(TrialRecord {
        policy: policy.clone(),
        objective: eval.objective,
        feasible: eval.feasible,
        flops_ratio: eval.flops_ratio,
        trial: index,
    })?;
    if eval.feasible {
        state.elites.push(policy.clone(), eval.objective);
    }
    let improved = eval.feasible && state.best_objective().is_none_or(|b| eval.objective > b);
    state.observe(&layer_policy, &eval, config.improvement_tolerance);
    let report = &mut recorder.report;
    if improved {
        report.best = Some(BestPolicy {
            trial: index,
            policy: layer_policy.clone(),
            objective: eval.objective,
            flops_ratio: eval.flops_ratio,
        });
    }
    report.trials.push(TrialEntry {
        trial: index,
        stage: state.stage,
        clusters: assignment.count(),
        source: proposal.source,
        proposal: proposal.policy,
        policy,
        layer_policy,
        objective: eval.objective,
        flops_ratio: eval.flops_ratio,
        feasible: eval.feasible,
        best_so_far: state.best_objective(),
        acquisition: proposal.acquisition,
        kernel: proposal.model.as_ref().map(|_| config.kernel.kind),
        hyperparameters: proposal.model,
    });
    report
        .wall_clock_seconds
        .push(started.elapsed().as_secs_f64());
    Ok(())
}

fn check_reachable(
    net: &NetworkDescriptor,
    config: &RunConfig,
    domain: &SearchDomain,
) -> Result<()> {
    let n = net.dimension();
    let lower_ratio = net.flops_ratio(&vec![domain.lo()[0]; n])?;
    if lower_ratio > config.target_flops_ratio {
        return Err(Error::TargetUnreachable {
            target: config.target_flops_ratio,
            lower_ratio,
        });
    }
    Ok(())
}

fn new_report(
    net: &NetworkDescriptor,
    config: &RunConfig,
    stages: Vec<usize>,
    assignments: &[ClusterAssignment],
    domain: &SearchDomain,
) -> Recorder {
    Recorder {
        report: RunReport {
            status: RunStatus::Completed,
            config: config.clone(),
            plan: PlanEntry {
                network: net.name().to_string(),
                layers: net.dimension(),
                target_flops_ratio: config.target_flops_ratio,
                seed: config.seed,
                stages,
                assignments: assignments.iter().map(|a| a.labels().to_vec()).collect(),
                initial_domain: domain.clone(),
            },
            best: None,
            trials: Vec::new(),
            transitions: Vec::new(),
            widenings: Vec::new(),
            wall_clock_seconds: Vec::new(),
        },
    }
}

/// Clustered search with rollback.
///
/// Configuration problems are returned as errors. Failures once trials have
/// started produce a report with the trials so far and a failed status.
pub fn run<E: Environment + ?Sized>(
    net: &NetworkDescriptor,
    env: &mut E,
    config: &RunConfig,
) -> Result<RunReport> {
    let n = net.dimension();
    config.validate(n)?;
    let clusters = config.clusters_for(n);
    let dendrogram = build_dendrogram(&net.feature_matrix(!config.raw_features))?;
    let plan = if config.rollback {
        StagePlan::new(&dendrogram, clusters, &config.stage_plan)?
    } else {
        StagePlan::single(&dendrogram, clusters)?
    };
    let mut domain = SearchDomain::full(clusters, config.domain_floor)?;
    check_reachable(net, config, &domain)?;

    let mut recorder = new_report(
        net,
        config,
        plan.stages().to_vec(),
        plan.assignments(),
        &domain,
    );
    let mut state = RunState::new(clusters, config.elite_capacity, config.seed);
    match search(
        net,
        env,
        config,
        &plan,
        &mut state,
        &mut domain,
        &mut recorder,
    ) {
        Ok(()) => Ok(recorder.report),
        Err(e) => Ok(recorder.fail(e)),
    }
}

fn search<E: Environment + ?Sized>(
    net: &NetworkDescriptor,
    env: &mut E,
    config: &RunConfig,
    plan: &StagePlan,
    state: &mut RunState,
    domain: &mut SearchDomain,
    recorder: &mut Recorder,
) -> Result<()> {
    let mut stream = sobol_stream(domain.dim(), &mut state.rng)?;
    let mut sobol_left = config.init_samples;
    let mut flops = net.flops_polynomial(plan.assignment(0).labels())?;
    while state.trial < config.total_trials {
        if !plan.is_last(state.stage) {
            if let Some(reason) = rollback_reason(state, config) {
                let from = plan.assignment(state.stage);
                let to = plan.assignment(state.stage + 1);
                let next = if state.elites.is_empty() {
                    lift_domain(domain, from, to)?
                } else {
                    scaled_domain(
                        &state.elites,
                        from,
                        to,
                        config.domain_mode,
                        config.domain_floor,
                    )?
                };
                recorder.report.transitions.push(TransitionEntry {
                    trial: state.trial,
                    from_stage: state.stage,
                    to_stage: state.stage + 1,
                    from_clusters: from.count(),
                    to_clusters: to.count(),
                    reason,
                    elites: state.elites.len(),
                    domain: next.clone(),
                });
                let history = seed_history(&state.history, from, to)?;
                state.enter_stage(state.stage + 1, history);
                *domain = next;
                stream = sobol_stream(domain.dim(), &mut state.rng)?;
                sobol_left = config.init_samples / 4;
                flops = net.flops_polynomial(to.labels())?;
            }
        }
        let started = Instant::now();
        let proposal = propose(state, &mut stream, &mut sobol_left, domain, &flops, config)?;
        let previous_best = state.best_objective();
        trial(
            net,
            env,
            config,
            state,
            plan.assignment(state.stage),
            domain,
            proposal,
            recorder,
            started,
        )?;
        // Stage 0 already spans the outer box, so only scaled boxes can move.
        if config.widen_domain && state.stage > 0 {
            let last = recorder
                .report
                .trials
                .last()
                .expect("a trial was just booked");
            // Only a gain beyond the fitted noise level counts as evidence
            // that the optimum lies past the edge.
            let significant = match (&last.hyperparameters, previous_best, state.best_objective()) {
                (Some(h), Some(before), Some(after)) => after - before > h.noise.sqrt(),
                _ => false,
            };
            let touched = bounds_touched(domain, last.policy.as_slice(), config.domain_floor)?;
            if significant && !touched.is_empty() {
                let wider = widen(domain, &touched, config.domain_floor)?;
                recorder.report.widenings.push(WideningEntry {
                    trial: state.trial,
                    stage: state.stage,
                    bounds: touched,
                    domain: wider.clone(),
                });
                *domain = wider;
            }
        }
    }
    Ok(())
}

/// Plain Bayesian optimization over every prunable layer: no clustering and
/// no stages. Matches [`run`] with `cluster_count = N` trial for trial.
pub fn run_naive<E: Environment + ?Sized>(
    net: &NetworkDescriptor,
    env: &mut E,
    config: &RunConfig,
) -> Result<RunReport> {
    let n = net.dimension();
    let config = RunConfig {
        cluster_count: Some(n),
        stage_plan: Vec::new(),
        ..config.clone()
    };
    config.validate(n)?;
    let domain = SearchDomain::full(n, config.domain_floor)?;
    check_reachable(net, &config, &domain)?;
    let identity = ClusterAssignment::singletons(net.prunable_indices().to_vec());
    let mut recorder = new_report(
        net,
        &config,
        vec![n],
        std::slice::from_ref(&identity),
        &domain,
    );
    let mut state = RunState::new(n, config.elite_capacity, config.seed);

    let result = (|| -> Result<()> {
        let mut stream = sobol_stream(n, &mut state.rng)?;
        let mut sobol_left = config.init_samples;
        let flops = net.flops_polynomial(identity.labels())?;
        while state.trial < config.total_trials {
            let started = Instant::now();
            let proposal = propose(
                &mut state,
                &mut stream,
                &mut sobol_left,
                &domain,
                &flops,
                &config,
            )?;
            trial(
                net,
                env,
                &config,
                &mut state,
                &identity,
                &domain,
                proposal,
                &mut recorder,
                started,
            )?;
        }
        Ok(())
    })();
    match result {
        Ok(()) => Ok(recorder.report),
        Err(e) => Ok(recorder.fail(e)),
    }
}
