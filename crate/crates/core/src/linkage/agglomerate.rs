use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{candidate_order, check_points, LinkageTree, TreeBuilder};
use crate::error::Result;
use crate::types::{PointId, SimilarityMatrix};

/// Bottom-up average-linkage agglomeration over `points`.
///
/// Each step merges the two current roots with the highest mean pairwise
/// similarity. Ties go to the pair whose smallest member ids are
/// lexicographically smallest, which makes the tree a pure function of the
/// input.
pub fn build_average_linkage(s: &SimilarityMatrix, points: &[PointId]) -> Result<LinkageTree> {
    check_points(s, points)?;
    let mut b = TreeBuilder::default();
    let roots: Vec<usize> = points.iter().map(|&p| b.leaf(p)).collect();
    let groups: Vec<Vec<PointId>> = points.iter().map(|&p| vec![p]).collect();
    let root = agglomerate(&mut b, s, &roots, &groups);
    Ok(b.finish(root))
}

#[derive(Debug)]
struct Candidate {
    average: f64,
    key: (PointId, PointId),
    a: usize,
    b: usize,
    version_a: u32,
    version_b: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        candidate_order((self.average, self.key), (other.average, other.key))
    }
}

/// Agglomerates existing subtrees (`roots[i]` spanning `groups[i]`) into a
/// single tree and returns the root's builder index.
///
/// Pairwise similarity sums between groups are kept in a dense table and
/// updated additively on each merge; candidates live in a lazy max-heap,
/// invalidated by per-slot version counters. Total work is
/// `O(m^2 log m)` for `m` groups after the initial `O(n^2)` sum pass.
pub(crate) fn agglomerate(
    b: &mut TreeBuilder,
    s: &SimilarityMatrix,
    roots: &[usize],
    groups: &[Vec<PointId>],
) -> usize {
    let m = roots.len();
    assert!(m > 0 && m == groups.len());
    if m == 1 {
        return roots[0];
    }
    let mut sums = vec![0.0f64; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            let total: f64 = groups[i]
                .iter()
                .map(|&x| groups[j].iter().map(|&y| s.get(x, y)).sum::<f64>())
                .sum();
            sums[i * m + j] = total;
            sums[j * m + i] = total;
        }
    }
    let mut size: Vec<usize> = groups.iter().map(Vec::len).collect();
    let mut min_id: Vec<PointId> = groups.iter().map(|g| *g.iter().min().expect("non-empty group")).collect();
    let mut node: Vec<usize> = roots.to_vec();
    let mut active = vec![true; m];
    let mut version = vec![0u32; m];

    let candidate = |sums: &[f64], size: &[usize], min_id: &[PointId], version: &[u32], a: usize, c: usize| {
        let (lo, hi) = (min_id[a].min(min_id[c]), min_id[a].max(min_id[c]));
        Candidate {
            average: sums[a * m + c] / (size[a] * size[c]) as f64,
            key: (lo, hi),
            a,
            b: c,
            version_a: version[a],
            version_b: version[c],
        }
    };

    let mut heap = BinaryHeap::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            heap.push(candidate(&sums, &size, &min_id, &version, i, j));
        }
    }

    for _ in 1..m {
        let best = loop {
            let c = heap.pop().expect("agglomeration ran out of candidates");
            if active[c.a] && active[c.b] && version[c.a] == c.version_a && version[c.b] == c.version_b {
                break c;
            }
        };
        let (a, gone) = (best.a, best.b);
        node[a] = b.join(node[a], node[gone], best.average);
        size[a] += size[gone];
        min_id[a] = min_id[a].min(min_id[gone]);
        active[gone] = false;
        version[a] += 1;
        for x in 0..m {
            if active[x] && x != a {
                let merged = sums[a * m + x] + sums[gone * m + x];
                sums[a * m + x] = merged;
                sums[x * m + a] = merged;
            }
        }
        for x in 0..m {
            if active[x] && x != a {
                heap.push(candidate(&sums, &size, &min_id, &version, a, x));
            }
        }
    }
    let last = (0..m).find(|&i| active[i]).expect("one group remains");
    node[last]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Clustering;
    use proptest::prelude::*;

    /// Direct recomputation of every pairwise average at every step.
    fn naive_tree(s: &SimilarityMatrix, points: &[PointId]) -> Vec<Vec<PointId>> {
        let mut groups: Vec<Vec<PointId>> = points.iter().map(|&p| vec![p]).collect();
        let mut all: Vec<Vec<PointId>> = groups.clone();
        while groups.len() > 1 {
            let mut best: Option<(f64, (PointId, PointId), usize, usize)> = None;
            for i in 0..groups.len() {
                for j in (i + 1)..groups.len() {
                    let avg = s.average(&groups[i], &groups[j]);
                    let (mi, mj) = (groups[i][0].min(groups[j][0]), groups[i][0].max(groups[j][0]));
                    let cand = (avg, (mi, mj), i, j);
                    let better = match best {
                        None => true,
                        Some(b) => candidate_order((cand.0, cand.1), (b.0, b.1)) == Ordering::Greater,
                    };
                    if better {
                        best = Some(cand);
                    }
                }
            }
            let (_, _, i, j) = best.unwrap();
            let gj = groups.remove(j);
            groups[i].extend(gj);
            groups[i].sort_unstable();
            all.push(groups[i].clone());
        }
        all.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        all
    }

    fn planted6() -> SimilarityMatrix {
        SimilarityMatrix::from_fn(6, |i, j| if (i < 3) == (j < 3) { 0.9 } else { 0.1 }).unwrap()
    }

    #[test]
    fn planted_root_children_are_the_targets() {
        let t = build_average_linkage(&planted6(), &[0, 1, 2, 3, 4, 5]).unwrap();
        let (a, b) = t.children(t.root()).unwrap();
        let mut sides = [t.members(a).to_vec(), t.members(b).to_vec()];
        for side in &mut sides {
            side.sort_unstable();
        }
        assert_eq!(sides, [vec![0, 1, 2], vec![3, 4, 5]]);
        let target = Clustering::from_groups(6, &[vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        assert!(t.is_laminar(&target).unwrap());
    }

    #[test]
    fn tiny_trees() {
        let s = planted6();
        let t = build_average_linkage(&s, &[4]).unwrap();
        assert_eq!(t.node_count(), 1);
        assert_eq!(t.to_newick(), "4;");
        let t = build_average_linkage(&s, &[4, 1]).unwrap();
        assert_eq!(t.to_newick(), "(1,4);");
        assert!(build_average_linkage(&s, &[]).is_err());
        assert!(build_average_linkage(&s, &[1, 1]).is_err());
        assert!(build_average_linkage(&s, &[9]).is_err());
    }

    #[test]
    fn ties_resolve_by_smallest_ids() {
        // All similarities equal: merges chain from the smallest id.
        let s = SimilarityMatrix::from_fn(4, |_, _| 0.5).unwrap();
        let t = build_average_linkage(&s, &[3, 2, 1, 0]).unwrap();
        assert_eq!(t.to_newick(), "(((0,1),2),3);");
    }

    #[test]
    fn subset_tree_only_holds_its_points() {
        let t = build_average_linkage(&planted6(), &[5, 0, 3]).unwrap();
        assert_eq!(t.leaf_count(), 3);
        assert_eq!(t.to_newick(), "(0,(3,5));");
    }

    proptest! {
        // Dyadic values keep every sum exact, so both routes see identical ties.
        #[test]
        fn matches_naive_recomputation(
            n in 1usize..14,
            vals in proptest::collection::vec(0u8..16, 0..100),
        ) {
            let s = SimilarityMatrix::from_fn(n, |i, j| {
                let k = (i * 31 + j * 7) % vals.len().max(1);
                vals.get(k).copied().unwrap_or(3) as f64 / 16.0
            }).unwrap();
            let points: Vec<PointId> = (0..n).collect();
            let fast = build_average_linkage(&s, &points).unwrap();
            prop_assert_eq!(fast.clusters(), naive_tree(&s, &points));
            prop_assert_eq!(fast.node_count(), 2 * n - 1);
        }

        #[test]
        fn deterministic(seed in 0u64..1000) {
            let s = SimilarityMatrix::from_fn(12, |i, j| (((i * 13 + j * 17) as u64 ^ seed) % 97) as f64 / 97.0).unwrap();
            let points: Vec<PointId> = (0..12).collect();
            let a = build_average_linkage(&s, &points).unwrap();
            let b = build_average_linkage(&s, &points).unwrap();
            prop_assert_eq!(a.to_newick(), b.to_newick());
        }
    }
}
