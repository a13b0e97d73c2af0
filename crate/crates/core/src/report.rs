//! What a run produces: the trial log and its summary.

use serde::{Deserialize, Serialize};

use crate::acquisition::SearchDomain;
use crate::controller::RunConfig;
use crate::gp::{Hyperparameters, KernelKind, PruningPolicy};
use crate::projection::Bound;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialSource {
    Sobol,
    Acquisition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RollbackReason {
    Stall,
    StageCap,
}

/// Search stages of a run and the cluster label of every prunable layer in
/// each of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub network: String,
    pub layers: usize,
    pub target_flops_ratio: f64,
    pub seed: u64,
    pub stages: Vec<usize>,
    pub assignments: Vec<Vec<usize>>,
    pub initial_domain: SearchDomain,
}

/// One evaluation. `proposal` and `policy` (after repair) live in the stage's
/// cluster space; `layer_policy` is what the environment saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub trial: usize,
    pub stage: usize,
    pub clusters: usize,
    pub source: TrialSource,
    pub proposal: PruningPolicy,
    pub policy: PruningPolicy,
    pub layer_policy: PruningPolicy,
    pub objective: f64,
    pub flops_ratio: f64,
    pub feasible: bool,
    pub best_so_far: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acquisition: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperparameters: Option<Hyperparameters>,
}

/// A move to the next stage, taking effect before trial `trial`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub trial: usize,
    pub from_stage: usize,
    pub to_stage: usize,
    pub from_clusters: usize,
    pub to_clusters: usize,
    pub reason: RollbackReason,
    pub elites: usize,
    pub domain: SearchDomain,
}

/// A box change inside a stage, applied before trial `trial`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WideningEntry {
    pub trial: usize,
    pub stage: usize,
    /// Stage-space bounds that moved.
    pub bounds: Vec<(usize, Bound)>,
    pub domain: SearchDomain,
}

/// One line of the trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Plan(PlanEntry),
    Trial(TrialEntry),
    Transition(TransitionEntry),
    Widening(WideningEntry),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed {
        message: String,
        payload: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestPolicy {
    pub trial: usize,
    pub policy: PruningPolicy,
    pub objective: f64,
    pub flops_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub config: RunConfig,
    pub plan: PlanEntry,
    pub best: Option<BestPolicy>,
    pub trials: Vec<TrialEntry>,
    pub transitions: Vec<TransitionEntry>,
    pub widenings: Vec<WideningEntry>,
    /// Seconds spent per trial, fitting and acquisition included. Kept out of
    /// the trial log so that the log is reproducible.
    pub wall_clock_seconds: Vec<f64>,
}

impl RunReport {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// Best feasible objective after each trial.
    pub fn curve(&self) -> Vec<Option<f64>> {
        self.trials.iter().map(|t| t.best_so_far).collect()
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.objective)
    }

    /// Plan first, then trials with each transition placed before the first
    /// trial of its stage.
    pub fn log_entries(&self) -> Vec<LogEntry> {
        let mut out = Vec::with_capacity(
            1 + self.trials.len() + self.transitions.len() + self.widenings.len(),
        );
        out.push(LogEntry::Plan(self.plan.clone()));
        let mut transitions = self.transitions.iter().peekable();
        let mut widenings = self.widenings.iter().peekable();
        for t in &self.trials {
            // A widening closes the stage it belongs to, so it precedes any
            // transition booked for the same trial.
            while let Some(w) = widenings.next_if(|w| w.trial <= t.trial) {
                out.push(LogEntry::Widening(w.clone()));
            }
            while let Some(tr) = transitions.next_if(|tr| tr.trial <= t.trial) {
                out.push(LogEntry::Transition(tr.clone()));
            }
            out.push(LogEntry::Trial(t.clone()));
        }
        out.extend(widenings.cloned().map(LogEntry::Widening));
        out.extend(transitions.cloned().map(LogEntry::Transition));
        out
    }
}
