use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Preservation ratios, one per search dimension, each in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PruningPolicy(Vec<f64>);

impl PruningPolicy {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0 && v <= 1.0))
        {
            return Err(Error::InvalidPolicy(format!(
                "entry {i} = {v} is outside (0, 1]"
            )));
        }
        Ok(Self(values))
    }

    pub fn uniform(dim: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for PruningPolicy {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// One evaluated policy. `trial` is the run-wide trial index and serves as the
/// record's timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub policy: PruningPolicy,
    pub objective: f64,
    pub feasible: bool,
    pub flops_ratio: f64,
    pub trial: usize,
}

/// Evaluated policies of one search space, in evaluation order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialHistory {
    dim: usize,
    records: Vec<TrialRecord>,
}

impl TrialHistory {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            records: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: TrialRecord) -> Result<()> {
        if record.policy.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: record.policy.len(),
            });
        }
        if !record.objective.is_finite() {
            return Err(Error::InvalidPolicy(format!(
                "trial {} has non-finite objective",
                record.trial
            )));
        }
        self.records.push(record);
        Ok(())
    }

    /// Highest objective among feasible records.
    pub fn best_feasible(&self) -> Option<&TrialRecord> {
        self.records
            .iter()
            .filter(|r| r.feasible)
            .fold(None, |best: Option<&TrialRecord>, r| match best {
                Some(b) if b.objective >= r.objective => Some(b),
                _ => Some(r),
            })
    }

    /// Policies in record order.
    pub fn inputs(&self) -> Vec<&[f64]> {
        self.records.iter().map(|r| r.policy.as_slice()).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }
}
