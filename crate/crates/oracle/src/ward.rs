//! Agglomerative Ward clustering in exact rational arithmetic, restarted from
//! singletons for every requested cluster count.
//!
//! Merge rule: the pair of current clusters with the smallest
//! `|A||B| / (|A| + |B|) * ||mean(A) - mean(B)||^2` merges; ties go to the
//! first pair in scan order over slots `(i < j)`. The merged cluster keeps
//! slot `i` and slot `j` is removed.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive, Zero};

fn exact(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite feature")
}

fn distance(points: &[Vec<BigRational>], a: &[usize], b: &[usize]) -> BigRational {
    let dim = points[0].len();
    let na = BigRational::from_integer(BigInt::from(a.len()));
    let nb = BigRational::from_integer(BigInt::from(b.len()));
    let mut sq = BigRational::zero();
    for d in 0..dim {
        let ma = a.iter().map(|&i| points[i][d].clone()).sum::<BigRational>() / na.clone();
        let mb = b.iter().map(|&i| points[i][d].clone()).sum::<BigRational>() / nb.clone();
        let diff = ma - mb;
        sq += diff.clone() * diff;
    }
    na.clone() * nb.clone() / (na + nb) * sq
}

/// Flat clustering into `clusters` groups; labels are numbered by first
/// appearance over the points.
pub fn partition(points: &[Vec<f64>], clusters: usize) -> Vec<usize> {
    assert!(clusters >= 1 && clusters <= points.len());
    let exact_points: Vec<Vec<BigRational>> = points
        .iter()
        .map(|p| p.iter().map(|v| exact(*v)).collect())
        .collect();
    let mut slots: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    while slots.len() > clusters {
        let mut best: Option<(BigRational, usize, usize)> = None;
        for i in 0..slots.len() {
            for j in i + 1..slots.len() {
                let d = distance(&exact_points, &slots[i], &slots[j]);
                if best.as_ref().is_none_or(|(b, _, _)| d < *b) {
                    best = Some((d, i, j));
                }
            }
        }
        let (_, i, j) = best.unwrap();
        let moved = slots.remove(j);
        slots[i].extend(moved);
    }
    let mut owner = vec![0; points.len()];
    for (s, members) in slots.iter().enumerate() {
        for &m in members {
            owner[m] = s;
        }
    }
    let mut order: Vec<usize> = Vec::new();
    owner
        .iter()
        .map(|o| match order.iter().position(|x| x == o) {
            Some(p) => p,
            None => {
                order.push(*o);
                order.len() - 1
            }
        })
        .collect()
}

/// Ward distance between two groups of points, computed exactly and rounded
/// once.
pub fn ward_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut all: Vec<Vec<BigRational>> = a
        .iter()
        .map(|p| p.iter().map(|v| exact(*v)).collect())
        .collect();
    all.extend(
        b.iter()
            .map(|p| p.iter().map(|v| exact(*v)).collect::<Vec<_>>()),
    );
    let ia: Vec<usize> = (0..a.len()).collect();
    let ib: Vec<usize> = (a.len()..a.len() + b.len()).collect();
    distance(&all, &ia, &ib).to_f64().unwrap()
}
