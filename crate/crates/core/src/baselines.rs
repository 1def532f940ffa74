//! Comparison splitters and split evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::error_report;
use crate::types::{ClusterId, Clustering, PointId, Purity, SimilarityMatrix};

/// Largest cluster the exhaustive 2-median search accepts.
pub const TWO_MEDIAN_CAP: usize = 400;
pub const SPECTRAL_TOLERANCE: f64 = 1e-8;
pub const SPECTRAL_MAX_ITERATIONS: usize = 10_000;

fn sorted_members(members: &[PointId], s: &SimilarityMatrix) -> Result<Vec<PointId>> {
    let mut m = members.to_vec();
    m.sort_unstable();
    m.dedup();
    if m.len() != members.len() {
        return Err(Error::domain("duplicate points in the cluster"));
    }
    if let Some(&p) = m.iter().find(|&&p| p >= s.n()) {
        return Err(Error::UnknownPoint(p));
    }
    if m.len() < 2 {
        return Err(Error::precondition("a split needs at least two points"));
    }
    Ok(m)
}

/// Optimal 2-median split with distance `1 - similarity`, found by trying
/// every pair of centres. Points equidistant from both centres join the
/// first; among equal costs the first centre pair in id order wins.
pub fn split_2median(s: &SimilarityMatrix, members: &[PointId]) -> Result<(Vec<PointId>, Vec<PointId>)> {
    if members.len() > TWO_MEDIAN_CAP {
        return Err(Error::SizeCap { size: members.len(), cap: TWO_MEDIAN_CAP });
    }
    let m = sorted_members(members, s)?;
    let d = |x: PointId, y: PointId| if x == y { 0.0 } else { 1.0 - s.get(x, y) };
    let mut best: Option<(f64, usize, usize)> = None;
    for a in 0..m.len() {
        for b in (a + 1)..m.len() {
            let cost: f64 = m.iter().map(|&x| d(x, m[a]).min(d(x, m[b]))).sum();
            if best.is_none_or(|(c, _, _)| cost < c) {
                best = Some((cost, a, b));
            }
        }
    }
    let (_, a, b) = best.expect("at least one centre pair");
    Ok(m.iter().partition(|&&x| d(x, m[a]) <= d(x, m[b])))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMode {
    /// Sweep cut of minimum conductance.
    Balanced,
    /// Cut between the adjacent sweep vertices of least similarity.
    Gap,
}

/// Connected components of the positive-weight graph, each sorted, ordered
/// by smallest member.
fn components(w: &[f64], m: usize) -> Vec<Vec<usize>> {
    let mut comp = vec![usize::MAX; m];
    let mut out = Vec::new();
    for start in 0..m {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut stack = vec![start];
        comp[start] = id;
        let mut members = Vec::new();
        while let Some(x) = stack.pop() {
            members.push(x);
            for y in 0..m {
                if comp[y] == usize::MAX && w[x * m + y] > 0.0 {
                    comp[y] = id;
                    stack.push(y);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Second-smallest eigenvector of `L = D - W` by power iteration on
/// `cI - L` with `c = 2 max degree`, deflated against the all-ones vector.
/// Returns the unit vector, sign fixed so its first entry is not positive,
/// and the number of iterations used.
pub fn fiedler_vector(w: &[f64], m: usize) -> (Vec<f64>, usize) {
    let degree: Vec<f64> = (0..m).map(|i| w[i * m..(i + 1) * m].iter().sum()).collect();
    let c = 2.0 * degree.iter().copied().fold(0.0, f64::max);
    let deflate = |v: &mut [f64]| {
        let mean = v.iter().sum::<f64>() / m as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
    };
    // Fixed, non-symmetric start so no eigenvector is missed by construction.
    let mut v: Vec<f64> = (0..m).map(|i| ((i as u64 * 2_654_435_761 % 1009) as f64) / 1009.0 + i as f64 * 1e-3).collect();
    deflate(&mut v);
    let mut next = vec![0.0; m];
    let mut iterations = 0;
    while iterations < SPECTRAL_MAX_ITERATIONS {
        iterations += 1;
        for i in 0..m {
            let row = &w[i * m..(i + 1) * m];
            let wv: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            next[i] = (c - degree[i]) * v[i] + wv;
        }
        deflate(&mut next);
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        std::mem::swap(&mut v, &mut next);
        if diff < SPECTRAL_TOLERANCE {
            break;
        }
    }
    if v.first().is_some_and(|&x| x > 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    (v, iterations)
}

/// Sweep split along the Fiedler vector of the similarity-weighted
/// Laplacian over `members`. Negative similarities count as 0. A
/// disconnected similarity graph is split into the component holding the
/// smallest point and the rest, without any eigenvector.
pub fn split_spectral(s: &SimilarityMatrix, members: &[PointId], mode: SpectralMode) -> Result<(Vec<PointId>, Vec<PointId>)> {
    let pts = sorted_members(members, s)?;
    let m = pts.len();
    let mut w = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            if a != b {
                w[a * m + b] = s.get(pts[a], pts[b]).max(0.0);
            }
        }
    }
    let comps = components(&w, m);
    if comps.len() > 1 {
        let first: Vec<PointId> = comps[0].iter().map(|&a| pts[a]).collect();
        let mut rest: Vec<PointId> = comps[1..].iter().flatten().map(|&a| pts[a]).collect();
        rest.sort_unstable();
        return Ok((first, rest));
    }
    let (v, _) = fiedler_vector(&w, m);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let cut = match mode {
        SpectralMode::Gap => (0..m - 1)
            .min_by(|&i, &j| w[order[i] * m + order[i + 1]].total_cmp(&w[order[j] * m + order[j + 1]]).then(i.cmp(&j)))
            .expect("m >= 2"),
        SpectralMode::Balanced => {
            let degree: Vec<f64> = (0..m).map(|i| w[i * m..(i + 1) * m].iter().sum()).collect();
            let total: f64 = degree.iter().sum();
            let mut in_prefix = vec![false; m];
            let (mut vol, mut cut_weight) = (0.0, 0.0);
            let mut best = (f64::INFINITY, 0);
            for i in 0..m - 1 {
                let x = order[i];
                // Moving x into the prefix: its edges to the prefix stop crossing, the rest start.
                let to_prefix: f64 = (0..m).filter(|&y| in_prefix[y]).map(|y| w[x * m + y]).sum();
                cut_weight += degree[x] - 2.0 * to_prefix;
                in_prefix[x] = true;
                vol += degree[x];
                let conductance = cut_weight / vol.min(total - vol);
                if conductance < best.0 {
                    best = (conductance, i);
                }
            }
            best.1
        }
    };
    let mut left: Vec<PointId> = order[..=cut].iter().map(|&a| pts[a]).collect();
    let mut right: Vec<PointId> = order[cut + 1..].iter().map(|&a| pts[a]).collect();
    left.sort_unstable();
    right.sort_unstable();
    Ok((left, right))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEvaluation {
    /// No target cluster has points on both sides.
    pub is_clean: bool,
    /// Correlation-clustering error after minus before.
    pub cc_delta: i64,
}

/// `c` with cluster `id` replaced by `left` and `right` (both impure).
pub fn apply_split(c: &Clustering, id: ClusterId, left: &[PointId], right: &[PointId]) -> Result<Clustering> {
    let cluster = c.get(id)?;
    let mut both: Vec<PointId> = left.iter().chain(right).copied().collect();
    both.sort_unstable();
    if left.is_empty() || right.is_empty() || both != cluster.members() {
        return Err(Error::domain(format!("the two sides must partition cluster {id}")));
    }
    let mut out = c.clone();
    out.replace(&[id], vec![(left.to_vec(), Purity::Impure), (right.to_vec(), Purity::Impure)]);
    Ok(out)
}

/// Checks that `after` is `before` with one cluster split in two, and
/// reports whether the split is clean and how it changed the cc error.
pub fn evaluate_split(before: &Clustering, after: &Clustering, target: &Clustering) -> Result<SplitEvaluation> {
    before.check_universe(after)?;
    before.check_universe(target)?;
    let b = before.canonical();
    let a = after.canonical();
    let gone: Vec<&Vec<PointId>> = b.iter().filter(|x| a.binary_search(x).is_err()).collect();
    let new: Vec<&Vec<PointId>> = a.iter().filter(|x| b.binary_search(x).is_err()).collect();
    let [parent] = gone[..] else {
        return Err(Error::domain("after must differ from before in exactly one split cluster"));
    };
    let [x, y] = new[..] else {
        return Err(Error::domain("after must replace the split cluster by exactly two clusters"));
    };
    let mut union: Vec<PointId> = x.iter().chain(y.iter()).copied().collect();
    union.sort_unstable();
    if &union != parent {
        return Err(Error::domain("the two new clusters do not partition the split cluster"));
    }
    let mut labels_x: Vec<ClusterId> = x.iter().map(|&p| target.cluster_of(p)).collect();
    labels_x.sort_unstable();
    let is_clean = !y.iter().any(|&p| labels_x.binary_search(&target.cluster_of(p)).is_ok());
    let cc = |c: &Clustering| error_report(c, target).map(|r| r.delta_cc as i64);
    Ok(SplitEvaluation { is_clean, cc_delta: cc(after)? - cc(before)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn planted(n: usize, sizes: &[usize], within: f64, across: f64) -> (SimilarityMatrix, Clustering) {
        let labels: Vec<u64> = sizes.iter().enumerate().flat_map(|(l, &s)| std::iter::repeat_n(l as u64, s)).collect();
        assert_eq!(labels.len(), n);
        let s = SimilarityMatrix::from_fn(n, |i, j| if labels[i] == labels[j] { within } else { across }).unwrap();
        (s, Clustering::from_labels(&labels))
    }

    #[test]
    fn two_median_basics() {
        let (s, _) = planted(6, &[3, 3], 0.9, 0.1);
        assert_eq!(split_2median(&s, &[4, 1]).unwrap(), (vec![1], vec![4]));
        assert_eq!(split_2median(&s, &[0, 1, 2, 3]).unwrap(), (vec![0, 1, 2], vec![3]));
        assert!(split_2median(&s, &[2]).is_err());
    }

    #[test]
    fn two_median_ties_are_deterministic() {
        let s = SimilarityMatrix::from_fn(5, |_, _| 0.5).unwrap();
        // Every pair costs 1.5; the first pair (0, 1) wins and ties go to centre 0.
        assert_eq!(split_2median(&s, &[0, 1, 2, 3, 4]).unwrap(), (vec![0, 2, 3, 4], vec![1]));
    }

    #[test]
    fn two_median_size_cap() {
        let s = SimilarityMatrix::from_fn(401, |_, _| 0.5).unwrap();
        let all: Vec<PointId> = (0..401).collect();
        assert!(matches!(split_2median(&s, &all), Err(Error::SizeCap { size: 401, cap: 400 })));
    }

    fn dense_fiedler(w: &[f64], m: usize) -> Vec<f64> {
        let degree: Vec<f64> = (0..m).map(|i| w[i * m..(i + 1) * m].iter().sum()).collect();
        let l = DMatrix::from_fn(m, m, |i, j| if i == j { degree[i] } else { -w[i * m + j] });
        let eig = SymmetricEigen::new(l);
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        eig.eigenvectors.column(idx[1]).iter().copied().collect()
    }

    #[test]
    fn power_iteration_matches_dense_solver() {
        for seed in 0..6u64 {
            let m = 8 + 7 * seed as usize;
            let w: Vec<f64> = (0..m * m)
                .map(|k| {
                    let (i, j) = (k / m, k % m);
                    if i == j {
                        0.0
                    } else {
                        let (a, b) = (i.min(j) as u64, i.max(j) as u64);
                        let base = ((a * 31 + b * 17 + seed * 7) % 23) as f64 / 23.0;
                        if (i < m / 3) == (j < m / 3) { 0.5 + base / 2.0 } else { base / 4.0 }
                    }
                })
                .collect();
            let (v, iters) = fiedler_vector(&w, m);
            assert!(iters < SPECTRAL_MAX_ITERATIONS);
            let u = dense_fiedler(&w, m);
            let dot: f64 = v.iter().zip(&u).map(|(a, b)| a * b).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-6, "seed {seed}: |<v,u>| = {dot}");
        }
    }

    #[test]
    fn spectral_recovers_planted_blocks() {
        let (s, _) = planted(12, &[5, 7], 0.8, 0.05);
        let all: Vec<PointId> = (0..12).collect();
        let blocks = (vec![0, 1, 2, 3, 4], vec![5, 6, 7, 8, 9, 10, 11]);
        assert_eq!(split_spectral(&s, &all, SpectralMode::Balanced).unwrap(), blocks);
        assert_eq!(split_spectral(&s, &all, SpectralMode::Gap).unwrap(), blocks);
        for mode in [SpectralMode::Balanced, SpectralMode::Gap] {
            assert_eq!(split_spectral(&s, &[3, 8], mode).unwrap(), (vec![3], vec![8]));
        }
    }

    #[test]
    fn gap_cuts_weak_edge_of_a_path() {
        let s = SimilarityMatrix::from_fn(3, |i, j| match (i.min(j), i.max(j)) {
            (0, 1) => 0.9,
            (1, 2) => 0.2,
            _ => 0.0,
        })
        .unwrap();
        assert_eq!(split_spectral(&s, &[0, 1, 2], SpectralMode::Gap).unwrap(), (vec![0, 1], vec![2]));
    }

    #[test]
    fn disconnected_graph_splits_by_component() {
        let s = SimilarityMatrix::from_fn(5, |i, j| if (i < 2) == (j < 2) && i != 4 && j != 4 { 0.7 } else { 0.0 }).unwrap();
        let all: Vec<PointId> = (0..5).collect();
        assert_eq!(split_spectral(&s, &all, SpectralMode::Gap).unwrap(), (vec![0, 1], vec![2, 3, 4]));
    }

    #[test]
    fn split_evaluation() {
        let target = Clustering::from_groups(6, &[vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        let before = Clustering::from_groups(6, &[vec![0, 1, 3], vec![2], vec![4, 5]]).unwrap();
        let clean = apply_split(&before, ClusterId(0), &[0, 1], &[3]).unwrap();
        let e = evaluate_split(&before, &clean, &target).unwrap();
        assert!(e.is_clean && e.cc_delta < 0);
        let dirty = apply_split(&before, ClusterId(0), &[0], &[1, 3]).unwrap();
        assert!(!evaluate_split(&before, &dirty, &target).unwrap().is_clean);

        // Splitting a pure cluster cuts its target cluster in two.
        let pure = Clustering::from_groups(6, &[vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        let after = apply_split(&pure, ClusterId(0), &[0], &[1, 2]).unwrap();
        let e = evaluate_split(&pure, &after, &target).unwrap();
        assert!(!e.is_clean && e.cc_delta > 0);

        assert!(evaluate_split(&before, &before, &target).is_err());
        assert!(apply_split(&before, ClusterId(0), &[0], &[1]).is_err());
    }
}
