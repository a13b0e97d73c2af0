//! Bottom-up Ward clustering of prunable layers.
//!
//! [`build_dendrogram`] runs the merge loop to a single cluster and records
//! every merge; [`Dendrogram::cut`] replays a prefix of the merges to get any
//! cluster count. Because all cuts come from one merge sequence, a finer cut
//! always refines a coarser one.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer_model::FeatureMatrix;

/// Ward linkage between two clusters of feature rows:
/// `n_a n_b / (n_a + n_b) * sum_v (mean_a(v) - mean_b(v))^2`.
pub fn ward_distance<R: AsRef<[f64]>>(a: &[R], b: &[R]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let dim = a[0].as_ref().len();
    if let Some(bad) = a.iter().chain(b).find(|r| r.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.as_ref().len(),
        });
    }
    let mean_a = centroid(a.iter().map(AsRef::as_ref), dim);
    let mean_b = centroid(b.iter().map(AsRef::as_ref), dim);
    Ok(ward_from_means(a.len(), &mean_a, b.len(), &mean_b))
}

fn centroid<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for row in rows {
        for (s, v) in sum.iter_mut().zip(row) {
            *s += v;
        }
        count += 1;
    }
    sum.iter_mut().for_each(|s| *s /= count as f64);
    sum
}

fn ward_from_means(n_a: usize, mean_a: &[f64], n_b: usize, mean_b: &[f64]) -> f64 {
    let (na, nb) = (n_a as f64, n_b as f64);
    let sq: f64 = mean_a
        .iter()
        .zip(mean_b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    na * nb / (na + nb) * sq
}

/// One merge step. Cluster ids follow the usual convention: leaves are
/// `0..N`, and the cluster created by merge `t` has id `N + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    /// Number of leaves in the merged cluster.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    leaves: Vec<usize>,
    merges: Vec<Merge>,
}

/// Runs the bottom-up merge loop to a single cluster.
///
/// Each round recomputes the Ward distance of every pair of live clusters from
/// their current members and merges the first minimal pair in `(i, j)` scan
/// order; the survivor keeps slot `i` and slot `j` is removed.
pub fn build_dendrogram(features: &FeatureMatrix) -> Result<Dendrogram> {
    let rows = features.rows();
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidNetwork("cannot cluster zero layers".into()));
    }
    // (cluster id, member leaf positions)
    let mut live: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::with_capacity(n - 1);
    while live.len() > 1 {
        let means: Vec<Vec<f64>> = live
            .iter()
            .map(|(_, members)| {
                centroid(members.iter().map(|&m| rows[m].as_slice()), rows[0].len())
            })
            .collect();
        let mut best = f64::INFINITY;
        let (mut alpha, mut beta) = (0, 1);
        for i in 0..live.len() {
            for j in i + 1..live.len() {
                let d = ward_from_means(live[i].1.len(), &means[i], live[j].1.len(), &means[j]);
                if d < best {
                    best = d;
                    alpha = i;
                    beta = j;
                }
            }
        }
        let (b_id, b_members) = live.remove(beta);
        let a = &mut live[alpha];
        let a_id = a.0;
        a.1.extend(b_members);
        a.0 = n + merges.len();
        merges.push(Merge {
            a: a_id,
            b: b_id,
            distance: best,
            size: a.1.len(),
        });
    }
    Ok(Dendrogram {
        leaves: features.layer_indices().to_vec(),
        merges,
    })
}

impl Dendrogram {
    /// Network layer index of each leaf.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Applies the first `N - count` merges.
    pub fn cut(&self, count: usize) -> Result<ClusterAssignment> {
        let n = self.leaves.len();
        if count == 0 || count > n {
            return Err(Error::ClusterCount {
                requested: count,
                max: n,
            });
        }
        // root[id] for every cluster id created so far; leaves point at themselves.
        let mut owner: Vec<usize> = (0..n).collect();
        let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for merge in &self.merges[..n - count] {
            let mut merged = std::mem::take(&mut members[merge.a]);
            merged.append(&mut members[merge.b]);
            for &leaf in &merged {
                owner[leaf] = members.len();
            }
            members.push(merged);
        }
        Ok(ClusterAssignment::from_raw(&owner, self.leaves.clone()))
    }

    /// Text export: one `a b distance size` line per merge.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# leaves (layer indices)\n");
        let leaves: Vec<String> = self.leaves.iter().map(|l| l.to_string()).collect();
        out.push_str(&leaves.join(" "));
        out.push_str("\n# a b distance size\n");
        for m in &self.merges {
            let _ = writeln!(out, "{} {} {} {}", m.a, m.b, m.distance, m.size);
        }
        out
    }
}

/// A partition of the prunable layers into `count` clusters.
///
/// Labels are indexed by prunable position and canonicalized so that cluster
/// ids appear in order of their first member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    count: usize,
    labels: Vec<usize>,
    layer_indices: Vec<usize>,
}

impl ClusterAssignment {
    /// Canonicalizes arbitrary group keys into `0..count` by first appearance.
    pub fn from_raw(keys: &[usize], layer_indices: Vec<usize>) -> Self {
        assert_eq!(keys.len(), layer_indices.len());
        let mut seen: Vec<(usize, usize)> = Vec::new();
        let labels = keys
            .iter()
            .map(|k| match seen.iter().find(|(key, _)| key == k) {
                Some(&(_, id)) => id,
                None => {
                    let id = seen.len();
                    seen.push((*k, id));
                    id
                }
            })
            .collect();
        Self {
            count: seen.len(),
            labels,
            layer_indices,
        }
    }

    /// Every layer in its own cluster.
    pub fn singletons(layer_indices: Vec<usize>) -> Self {
        let keys: Vec<usize> = (0..layer_indices.len()).collect();
        Self::from_raw(&keys, layer_indices)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Cluster id per prunable position.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn layer_indices(&self) -> &[usize] {
        &self.layer_indices
    }

    /// Number of prunable layers covered.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Prunable positions of the members of each cluster.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (pos, &label) in self.labels.iter().enumerate() {
            out[label].push(pos);
        }
        out
    }

    /// For every cluster of `self`, the cluster of `coarser` containing it, or
    /// `None` when `self` does not refine `coarser`.
    pub fn parents_in(&self, coarser: &ClusterAssignment) -> Option<Vec<usize>> {
        if coarser.labels.len() != self.labels.len() {
            return None;
        }
        let mut parent = vec![usize::MAX; self.count];
        for (&fine, &coarse) in self.labels.iter().zip(&coarser.labels) {
            if parent[fine] == usize::MAX {
                parent[fine] = coarse;
            } else if parent[fine] != coarse {
                return None;
            }
        }
        Some(parent)
    }

    pub fn refines(&self, coarser: &ClusterAssignment) -> bool {
        self.parents_in(coarser).is_some()
    }

    /// Text export: one `layer_index cluster_id` line per prunable layer.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# layer cluster\n");
        for (layer, label) in self.layer_indices.iter().zip(&self.labels) {
            let _ = writeln!(out, "{layer} {label}");
        }
        out
    }
}
