//! Core value types: points, similarity matrices, clusters and clusterings.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a point in `[0, n)`.
pub type PointId = usize;

/// Stable identifier of a cluster. Identifiers are never reused inside a
/// clustering: an edit that changes a cluster's members retires the old id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u64);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Purity flag carried by every cluster.
///
/// A cluster is marked pure only by a merge procedure that carved it out of
/// a single tree node or graph component; initial clusters and split halves
/// are impure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Purity {
    Pure,
    #[default]
    Impure,
}

impl Purity {
    pub fn is_pure(self) -> bool {
        matches!(self, Purity::Pure)
    }
}

/// Symmetric pairwise similarity over `n` points, stored dense.
///
/// Self-similarity is fixed at 1.0 and never read by any algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Builds a matrix by evaluating `f(i, j)` once for every `i < j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(PointId, PointId) -> f64) -> Result<Self> {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
            for j in (i + 1)..n {
                let v = f(i, j);
                if !v.is_finite() {
                    return Err(Error::domain(format!("similarity ({i},{j}) is not finite")));
                }
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Ok(SimilarityMatrix { n, values })
    }

    /// Wraps a row-major `n × n` buffer, validating symmetry and finiteness.
    /// The diagonal is overwritten with 1.0.
    pub fn from_dense(n: usize, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::domain(format!(
                "expected {} values for n={n}, got {}",
                n * n,
                values.len()
            )));
        }
        for i in 0..n {
            values[i * n + i] = 1.0;
            for j in (i + 1)..n {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::domain(format!("similarity ({i},{j}) is not finite")));
                }
                if a != b {
                    return Err(Error::domain(format!(
                        "matrix is not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(SimilarityMatrix { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: PointId, j: PointId) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: PointId) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// Row-major dense values, diagonal included.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Mean similarity between two point sets (`S(A, B)`).
    pub fn average(&self, a: &[PointId], b: &[PointId]) -> f64 {
        if a.is_empty() || b.is_empty() {
            return 0.0;
        }
        let total: f64 = a
            .iter()
            .map(|&x| b.iter().map(|&y| self.get(x, y)).sum::<f64>())
            .sum();
        total / (a.len() * b.len()) as f64
    }

    /// Sum of similarities from `x` to every other point of `set`.
    pub fn sum_to(&self, x: PointId, set: &[PointId]) -> f64 {
        set.iter().filter(|&&y| y != x).map(|&y| self.get(x, y)).sum()
    }

    /// Sub-matrix over `points`, reindexed densely in the given order.
    pub fn restrict(&self, points: &[PointId]) -> SimilarityMatrix {
        let m = points.len();
        let mut values = vec![0.0; m * m];
        for (a, &x) in points.iter().enumerate() {
            for (b, &y) in points.iter().enumerate() {
                values[a * m + b] = if a == b { 1.0 } else { self.get(x, y) };
            }
        }
        SimilarityMatrix { n: m, values }
    }

    /// Overwrites one unordered pair. Used by generators and tests.
    pub fn set(&mut self, i: PointId, j: PointId, value: f64) {
        if i != j {
            self.values[i * self.n + j] = value;
            self.values[j * self.n + i] = value;
        }
    }
}

/// A cluster: non-empty sorted member list plus its purity flag.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: ClusterId,
    members: Vec<PointId>,
    pub purity: Purity,
}

impl Cluster {
    pub fn members(&self) -> &[PointId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, p: PointId) -> bool {
        self.members.binary_search(&p).is_ok()
    }
}

/// A partition of `[0, n)` into labelled clusters.
#[derive(Clone, Debug)]
pub struct Clustering {
    n: usize,
    clusters: BTreeMap<ClusterId, Cluster>,
    assignment: Vec<ClusterId>,
    next_id: u64,
}

impl Clustering {
    /// Clustering where point `p` belongs to cluster `labels[p]`. All clusters
    /// start impure and keep the label value as their id.
    pub fn from_labels(labels: &[u64]) -> Self {
        let mut groups: BTreeMap<u64, Vec<PointId>> = BTreeMap::new();
        for (p, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(p);
        }
        let next_id = groups.keys().next_back().map_or(0, |&m| m + 1);
        let clusters = groups
            .into_iter()
            .map(|(l, members)| {
                (
                    ClusterId(l),
                    Cluster {
                        id: ClusterId(l),
                        members,
                        purity: Purity::Impure,
                    },
                )
            })
            .collect();
        Clustering {
            n: labels.len(),
            clusters,
            assignment: labels.iter().map(|&l| ClusterId(l)).collect(),
            next_id,
        }
    }

    /// Clustering from explicit groups; group `i` receives id `i`. Empty
    /// groups are dropped. Fails unless the groups partition `[0, n)`.
    pub fn from_groups(n: usize, groups: &[Vec<PointId>]) -> Result<Self> {
        let mut labels = vec![u64::MAX; n];
        for (g, members) in groups.iter().enumerate() {
            for &p in members {
                if p >= n {
                    return Err(Error::UnknownPoint(p));
                }
                if labels[p] != u64::MAX {
                    return Err(Error::domain(format!("point {p} appears in two groups")));
                }
                labels[p] = g as u64;
            }
        }
        if let Some(p) = labels.iter().position(|&l| l == u64::MAX) {
            return Err(Error::domain(format!("point {p} is not assigned to any group")));
        }
        Ok(Self::from_labels(&labels))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of clusters.
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn clusters(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = ClusterId> + '_ {
        self.clusters.keys().copied()
    }

    pub fn get(&self, id: ClusterId) -> Result<&Cluster> {
        self.clusters.get(&id).ok_or(Error::UnknownCluster(id))
    }

    pub fn cluster_of(&self, p: PointId) -> ClusterId {
        self.assignment[p]
    }

    /// Per-point cluster id.
    pub fn assignment(&self) -> &[ClusterId] {
        &self.assignment
    }

    /// The id the next new cluster will receive.
    pub fn next_id(&self) -> ClusterId {
        ClusterId(self.next_id)
    }

    /// Sorted list of sorted member lists; equal for equal partitions
    /// regardless of ids and purity flags.
    pub fn canonical(&self) -> Vec<Vec<PointId>> {
        let mut out: Vec<Vec<PointId>> = self.clusters.values().map(|c| c.members.clone()).collect();
        out.sort();
        out
    }

    /// Partition equality, ignoring ids and purity.
    pub fn same_partition(&self, other: &Clustering) -> bool {
        if self.n != other.n || self.len() != other.len() {
            return false;
        }
        // Two partitions agree iff every cluster of `self` is exactly a cluster of `other`.
        self.clusters.values().all(|c| {
            let target = other.assignment[c.members[0]];
            let oc = &other.clusters[&target];
            oc.members == c.members
        })
    }

    pub(crate) fn check_universe(&self, other: &Clustering) -> Result<()> {
        if self.n != other.n {
            return Err(Error::domain(format!(
                "point universes differ: {} vs {} points",
                self.n, other.n
            )));
        }
        Ok(())
    }

    /// Marks a cluster pure or impure. Used when importing state; edits
    /// never turn a pure cluster impure.
    pub fn set_purity(&mut self, id: ClusterId, purity: Purity) -> Result<()> {
        self.clusters.get_mut(&id).ok_or(Error::UnknownCluster(id))?.purity = purity;
        Ok(())
    }

    /// Replaces the clusters `removed` with new clusters built from `added`.
    /// Fresh ids are handed out in order. The union of the added member sets
    /// must equal the union of the removed ones; empty additions are skipped.
    pub(crate) fn replace(
        &mut self,
        removed: &[ClusterId],
        added: Vec<(Vec<PointId>, Purity)>,
    ) -> Vec<Cluster> {
        let mut freed = 0usize;
        for id in removed {
            let c = self.clusters.remove(id).expect("replace: removed id must exist");
            freed += c.members.len();
        }
        let mut out = Vec::with_capacity(added.len());
        let mut placed = 0usize;
        for (mut members, purity) in added {
            if members.is_empty() {
                continue;
            }
            members.sort_unstable();
            let id = ClusterId(self.next_id);
            self.next_id += 1;
            for &p in &members {
                self.assignment[p] = id;
            }
            placed += members.len();
            let c = Cluster { id, members, purity };
            self.clusters.insert(id, c.clone());
            out.push(c);
        }
        debug_assert_eq!(freed, placed, "edit must preserve the partition");
        out
    }
}

impl PartialEq for Clustering {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.clusters == other.clusters
    }
}
