//! Clustering distances: under/overclustering and correlation-clustering error.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClusterId, Clustering, PointId};

/// All six error counts of a proposed clustering against a target.
///
/// `delta_cco` and `delta_ccu` count *ordered* pairs, so both are even.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub delta_u: u64,
    pub delta_o: u64,
    pub delta: u64,
    pub delta_cco: u64,
    pub delta_ccu: u64,
    pub delta_cc: u64,
}

impl ErrorReport {
    pub fn is_zero(&self) -> bool {
        self.delta == 0 && self.delta_cc == 0
    }
}

/// Number of additional clusters of `target` that `members` touches:
/// `|{C' in target : C' ∩ members ≠ ∅}| - 1`.
pub fn cluster_distance(members: &[PointId], target: &Clustering) -> Result<u64> {
    if members.is_empty() {
        return Err(Error::precondition("cluster_distance of an empty cluster"));
    }
    let mut touched = HashSet::new();
    for &p in members {
        if p >= target.n() {
            return Err(Error::UnknownPoint(p));
        }
        touched.insert(target.cluster_of(p));
    }
    Ok(touched.len() as u64 - 1)
}

/// `dist(a, b)`: sum of [`cluster_distance`] over the clusters of `a`.
pub fn clustering_distance(a: &Clustering, b: &Clustering) -> Result<u64> {
    a.check_universe(b)?;
    let table = Contingency::new(a, b);
    Ok(table.row_spread())
}

/// Computes every error count in one pass over the contingency table.
pub fn error_report(proposed: &Clustering, target: &Clustering) -> Result<ErrorReport> {
    proposed.check_universe(target)?;
    let table = Contingency::new(proposed, target);
    let delta_o = table.row_spread();
    let delta_u = table.col_spread();

    let ordered = |s: u64| s * s.saturating_sub(1);
    let same_both: u64 = table.cells.values().map(|&c| ordered(c)).sum();
    let same_proposed: u64 = proposed.clusters().map(|c| ordered(c.len() as u64)).sum();
    let same_target: u64 = target.clusters().map(|c| ordered(c.len() as u64)).sum();
    let delta_cco = same_proposed - same_both;
    let delta_ccu = same_target - same_both;

    Ok(ErrorReport {
        delta_u,
        delta_o,
        delta: delta_u + delta_o,
        delta_cco,
        delta_ccu,
        delta_cc: delta_cco + delta_ccu,
    })
}

/// Sparse intersection counts `|A_i ∩ B_j|`.
pub(crate) struct Contingency {
    pub(crate) cells: HashMap<(ClusterId, ClusterId), u64>,
}

impl Contingency {
    pub(crate) fn new(a: &Clustering, b: &Clustering) -> Self {
        let mut cells = HashMap::new();
        for (&ca, &cb) in a.assignment().iter().zip(b.assignment()) {
            *cells.entry((ca, cb)).or_insert(0) += 1;
        }
        Contingency { cells }
    }

    /// `Σ_i (#columns touched by row i) - 1`.
    fn row_spread(&self) -> u64 {
        let mut per_row: BTreeMap<ClusterId, u64> = BTreeMap::new();
        for &(r, _) in self.cells.keys() {
            *per_row.entry(r).or_insert(0) += 1;
        }
        per_row.values().map(|v| v - 1).sum()
    }

    fn col_spread(&self) -> u64 {
        let mut per_col: BTreeMap<ClusterId, u64> = BTreeMap::new();
        for &(_, c) in self.cells.keys() {
            *per_col.entry(c).or_insert(0) += 1;
        }
        per_col.values().map(|v| v - 1).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Brute-force ordered-pair oracle.
    fn cc_pairs(p: &Clustering, t: &Clustering) -> (u64, u64) {
        let (mut over, mut under) = (0, 0);
        for u in 0..p.n() {
            for v in 0..p.n() {
                let c = p.cluster_of(u) == p.cluster_of(v);
                let cs = t.cluster_of(u) == t.cluster_of(v);
                if c && !cs {
                    over += 1;
                }
                if !c && cs {
                    under += 1;
                }
            }
        }
        (over, under)
    }

    fn w1() -> (Clustering, Clustering) {
        // Points 1..6 of the worked example mapped to 0..5.
        let target = Clustering::from_groups(6, &[vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        let proposed =
            Clustering::from_groups(6, &[vec![0, 1], vec![2, 3], vec![4], vec![5]]).unwrap();
        (proposed, target)
    }

    #[test]
    fn cluster_distance_cases() {
        let (_, target) = w1();
        assert_eq!(cluster_distance(&[0, 1, 2], &target).unwrap(), 0);
        assert_eq!(cluster_distance(&[2, 3], &target).unwrap(), 1);
        let four = Clustering::from_labels(&[0, 1, 2, 3, 0, 1]);
        assert_eq!(cluster_distance(&[0, 1, 2, 3, 4, 5], &four).unwrap(), 3);
        assert!(cluster_distance(&[], &target).is_err());
        assert!(matches!(cluster_distance(&[9], &target), Err(Error::UnknownPoint(9))));
    }

    #[test]
    fn worked_example_errors() {
        let (p, t) = w1();
        let r = error_report(&p, &t).unwrap();
        assert_eq!(cc_pairs(&p, &t), (2, 10));
        assert_eq!(r.delta_u, 3);
        assert_eq!(r.delta_o, 1);
        assert_eq!(r.delta, 4);
        assert_eq!(r.delta_cco, 2);
        assert_eq!(r.delta_ccu, 10);
        assert_eq!(r.delta_cc, 12);
    }

    #[test]
    fn identity_is_zero() {
        let (p, _) = w1();
        assert_eq!(error_report(&p, &p).unwrap(), ErrorReport::default());
    }

    #[test]
    fn singleton_target_with_pairs() {
        let target = Clustering::from_labels(&(0..20).collect::<Vec<u64>>());
        let pairs: Vec<u64> = (0..20).map(|p| p / 2).collect();
        let proposed = Clustering::from_labels(&pairs);
        let r = error_report(&proposed, &target).unwrap();
        assert_eq!(r.delta_o, 10);
        assert_eq!(r.delta_u, 0);
        // Ordered pairs: twice the unordered count of n/2.
        assert_eq!(r.delta_cc, 20);
    }

    #[test]
    fn universe_mismatch() {
        let a = Clustering::from_labels(&[0, 0]);
        let b = Clustering::from_labels(&[0, 0, 1]);
        assert!(error_report(&a, &b).is_err());
    }
}
