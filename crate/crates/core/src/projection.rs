//! Moving policies, histories and search boxes between cluster spaces.

use serde::{Deserialize, Serialize};

use crate::acquisition::SearchDomain;
use crate::clustering::{ClusterAssignment, Dendrogram};
use crate::error::{Error, Result};
use crate::gp::{PruningPolicy, TrialHistory, TrialRecord};

/// Lowest preservation ratio any search box may contain.
pub const DOMAIN_FLOOR: f64 = 0.05;

/// Default elite buffer size.
pub const ELITE_CAPACITY: usize = 10;

/// Smallest outward step when a bound is widened; lets a degenerate box open.
pub const WIDEN_MIN_STEP: f64 = 0.05;

/// Cluster counts visited by a run, each with its cut of one dendrogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    stages: Vec<usize>,
    assignments: Vec<ClusterAssignment>,
}

impl StagePlan {
    /// `[clusters, bridges.., N]`, collapsing to `[N]` when `clusters == N`.
    pub fn new(dendrogram: &Dendrogram, clusters: usize, bridges: &[usize]) -> Result<Self> {
        let n = dendrogram.len();
        let mut stages = vec![clusters];
        for &b in bridges {
            if b <= *stages.last().unwrap() || b >= n {
                return Err(Error::Config(format!(
                    "bridge stages must be strictly increasing within ({clusters}, {n}), got {bridges:?}"
                )));
            }
            stages.push(b);
        }
        if clusters != n {
            stages.push(n);
        }
        Self::from_stages(dendrogram, stages)
    }

    /// A plan that never leaves `clusters`.
    pub fn single(dendrogram: &Dendrogram, clusters: usize) -> Result<Self> {
        Self::from_stages(dendrogram, vec![clusters])
    }

    fn from_stages(dendrogram: &Dendrogram, stages: Vec<usize>) -> Result<Self> {
        let assignments = stages
            .iter()
            .map(|&c| dendrogram.cut(c))
            .collect::<Result<Vec<_>>>()?;
        for pair in assignments.windows(2) {
            if !pair[1].refines(&pair[0]) {
                return Err(Error::NotNested);
            }
        }
        Ok(Self {
            stages,
            assignments,
        })
    }

    pub fn stages(&self) -> &[usize] {
        &self.stages
    }

    pub fn assignments(&self) -> &[ClusterAssignment] {
        &self.assignments
    }

    pub fn assignment(&self, stage: usize) -> &ClusterAssignment {
        &self.assignments[stage]
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn is_last(&self, stage: usize) -> bool {
        stage + 1 == self.stages.len()
    }
}

/// The highest-objective policies of the current stage, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliteBuffer {
    capacity: usize,
    entries: Vec<(PruningPolicy, f64)>,
}

impl Default for EliteBuffer {
    fn default() -> Self {
        Self::new(ELITE_CAPACITY)
    }
}

impl EliteBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Inserts behind entries with an equal objective; returns whether the
    /// policy was kept.
    pub fn push(&mut self, policy: PruningPolicy, objective: f64) -> bool {
        let at = self.entries.partition_point(|(_, o)| *o >= objective);
        if at >= self.capacity {
            return false;
        }
        self.entries.insert(at, (policy, objective));
        self.entries.truncate(self.capacity);
        true
    }

    pub fn entries(&self) -> &[(PruningPolicy, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// How the elite extremes become a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainMode {
    /// One `[min, max]` per coarse cluster, inherited by its children.
    #[default]
    PerCluster,
    /// A single `[min, max]` over every entry of every elite.
    Global,
}

fn parents(from: &ClusterAssignment, to: &ClusterAssignment) -> Result<Vec<usize>> {
    to.parents_in(from).ok_or(Error::NotNested)
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Each cluster of `to` takes the value of its parent cluster in `from`.
pub fn lift(
    policy: &PruningPolicy,
    from: &ClusterAssignment,
    to: &ClusterAssignment,
) -> Result<PruningPolicy> {
    check_dim(from.count(), policy.len())?;
    let parent = parents(from, to)?;
    let values = policy.as_slice();
    PruningPolicy::new(
        parent.iter().map(|&p| values[p]).collect(),
    )
}

/// Per-layer ratios induced by a policy over `assignment`'s clusters.
pub fn to_layers(policy: &PruningPolicy, assignment: &ClusterAssignment) -> Result<PruningPolicy> {
    check_dim(assignment.count(), policy.len())?;
    let values = policy.as_slice();
    PruningPolicy::new(assignment.labels().iter().map(|&l| values[l]).collect())
}

/// Lifts a box the same way [`lift`] lifts a policy.
pub fn lift_domain(
    domain: &SearchDomain,
    from: &ClusterAssignment,
    to: &ClusterAssignment,
) -> Result<SearchDomain> {
    check_dim(from.count(), domain.dim())?;
    let parent = parents(from, to)?;
    SearchDomain::new(
        parent.iter().map(|&p| domain.lo()[p]).collect(),
        parent.iter().map(|&p| domain.hi()[p]).collect(),
    )
}

/// Box spanned by the elites of the `from` stage, lifted onto `to`, with
/// every lower bound raised to at least `floor`.
pub fn scaled_domain(
    buffer: &EliteBuffer,
    from: &ClusterAssignment,
    to: &ClusterAssignment,
    mode: DomainMode,
    floor: f64,
) -> Result<SearchDomain> {
    let Some((first, _)) = buffer.entries().first() else {
        return Err(Error::EmptyBuffer);
    };
    let dim = from.count();
    for (p, _) in buffer.entries() {
        check_dim(dim, p.len())?;
    }
    let mut lo = first.as_slice().to_vec();
    let mut hi = lo.clone();
    for (p, _) in &buffer.entries()[1..] {
        for (j, &v) in p.as_slice().iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    if mode == DomainMode::Global {
        let min = lo.iter().copied().fold(f64::INFINITY, f64::min);
        let max = hi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        lo.fill(min);
        hi.fill(max);
    }
    for (l, h) in lo.iter_mut().zip(hi.iter_mut()) {
        *l = l.max(floor).min(1.0);
        *h = h.max(*l);
    }
    lift_domain(&SearchDomain::new(lo, hi)?, from, to)
}

/// One side of a coordinate's interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Lower,
    Upper,
}

/// Bounds of `domain` that `policy` sits on, skipping those already at the
/// outer `[floor, 1]` limit.
pub fn bounds_touched(
    domain: &SearchDomain,
    policy: &[f64],
    floor: f64,
) -> Result<Vec<(usize, Bound)>> {
    check_dim(domain.dim(), policy.len())?;
    let mut out = Vec::new();
    for (i, &x) in policy.iter().enumerate() {
        if x <= domain.lo()[i] && domain.lo()[i] > floor {
            out.push((i, Bound::Lower));
        }
        if x >= domain.hi()[i] && domain.hi()[i] < 1.0 {
            out.push((i, Bound::Upper));
        }
    }
    Ok(out)
}

/// Moves each listed bound outward by the coordinate's width, at least
/// [`WIDEN_MIN_STEP`], without leaving `[floor, 1]`.
pub fn widen(domain: &SearchDomain, bounds: &[(usize, Bound)], floor: f64) -> Result<SearchDomain> {
    let (mut lo, mut hi) = (domain.lo().to_vec(), domain.hi().to_vec());
    for &(i, side) in bounds {
        if i >= domain.dim() {
            return Err(Error::InvalidDomain(format!(
                "bound on coordinate {i} of a {}-dimensional box",
                domain.dim()
            )));
        }
        let step = (domain.hi()[i] - domain.lo()[i]).max(WIDEN_MIN_STEP);
        match side {
            Bound::Lower => lo[i] = (lo[i] - step).max(floor),
            Bound::Upper => hi[i] = (hi[i] + step).min(1.0),
        }
    }
    SearchDomain::new(lo, hi)
}

/// Lifts every record's policy; objectives, flags and order are kept.
pub fn seed_history(
    history: &TrialHistory,
    from: &ClusterAssignment,
    to: &ClusterAssignment,
) -> Result<TrialHistory> {
    check_dim(from.count(), history.dim())?;
    let mut out = TrialHistory::new(to.count());
    for record in history.records() {
        out.push(TrialRecord {
            policy: lift(&record.policy, from, to)?,
            ..record.clone()
        })?;
    }
    Ok(out)
}
