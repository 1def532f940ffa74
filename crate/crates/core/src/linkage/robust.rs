//! Robust global tree: agglomerate dense "blobs" first and attach isolated
//! points last, so that outliers sit at the top of the tree instead of
//! being wedged between genuine groups.
//!
//! Blob heuristic: link every point to its `min_blob - 1` most similar
//! points (ties to the smaller id, strictly positive similarity only), take
//! connected components of the resulting undirected graph, and treat
//! components smaller than `min_blob` as leftovers. Components larger than
//! `4 * min_blob` are split greedily along their own average-linkage tree,
//! always opening the largest oversized part, until every part fits.

use super::agglomerate::agglomerate;
use super::{check_points, LinkageTree, TreeBuilder};
use crate::error::{Error, Result};
use crate::types::{PointId, SimilarityMatrix};

/// Connected components of the neighbour graph, before any size-based split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Blobs {
    /// Components with at least `min_blob` points, each sorted, ordered by smallest id.
    pub blobs: Vec<Vec<PointId>>,
    /// Points in components smaller than `min_blob`, sorted.
    pub leftovers: Vec<PointId>,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

pub fn find_blobs(s: &SimilarityMatrix, points: &[PointId], min_blob: usize) -> Result<Blobs> {
    check_points(s, points)?;
    if min_blob == 0 {
        return Err(Error::domain("min_blob must be at least 1"));
    }
    let mut sorted = points.to_vec();
    sorted.sort_unstable();
    let m = sorted.len();
    let k = min_blob - 1;
    let mut dsu = DisjointSet::new(m);
    if k > 0 {
        for a in 0..m {
            let x = sorted[a];
            let mut nbrs: Vec<usize> = (0..m).filter(|&b| b != a && s.get(x, sorted[b]) > 0.0).collect();
            nbrs.sort_by(|&b, &c| s.get(x, sorted[c]).total_cmp(&s.get(x, sorted[b])).then(b.cmp(&c)));
            for &b in nbrs.iter().take(k) {
                dsu.union(a, b);
            }
        }
    }
    let mut comps: Vec<Vec<PointId>> = vec![Vec::new(); m];
    for a in 0..m {
        let r = dsu.find(a);
        comps[r].push(sorted[a]);
    }
    let mut blobs = Vec::new();
    let mut leftovers = Vec::new();
    for comp in comps.into_iter().filter(|c| !c.is_empty()) {
        if comp.len() >= min_blob {
            blobs.push(comp);
        } else {
            leftovers.extend(comp);
        }
    }
    leftovers.sort_unstable();
    Ok(Blobs { blobs, leftovers })
}

/// Builds the blob-based tree described in the module docs. With
/// `min_blob = 1` every point is its own blob and the result equals
/// [`super::build_average_linkage`].
pub fn build_robust_tree(s: &SimilarityMatrix, points: &[PointId], min_blob: usize) -> Result<LinkageTree> {
    let Blobs { blobs, leftovers } = find_blobs(s, points, min_blob)?;
    if blobs.is_empty() {
        return super::build_average_linkage(s, points);
    }
    let cap = 4 * min_blob;
    let mut b = TreeBuilder::default();
    let mut roots = Vec::new();
    let mut groups = Vec::new();
    for blob in &blobs {
        let leaves: Vec<usize> = blob.iter().map(|&p| b.leaf(p)).collect();
        let singles: Vec<Vec<PointId>> = blob.iter().map(|&p| vec![p]).collect();
        let root = agglomerate(&mut b, s, &leaves, &singles);
        // Open the largest oversized part until all parts fit.
        let mut parts = vec![root];
        while let Some((idx, _)) = parts
            .iter()
            .enumerate()
            .filter(|(_, &n)| b.nodes[n].size > cap)
            .max_by(|(_, &x), (_, &y)| {
                b.nodes[x].size.cmp(&b.nodes[y].size).then(b.nodes[y].min_point.cmp(&b.nodes[x].min_point))
            })
        {
            let node = parts.swap_remove(idx);
            let (l, r) = b.nodes[node].children.expect("oversized part is internal");
            parts.push(l);
            parts.push(r);
        }
        parts.sort_by_key(|&n| b.nodes[n].min_point);
        for part in parts {
            groups.push(collect_points(&b, part));
            roots.push(part);
        }
    }
    let mut root = agglomerate(&mut b, s, &roots, &groups);
    let mut placed: Vec<PointId> = groups.concat();

    // Leftovers join one by one at the top; the least similar joins last.
    let mut rest = leftovers;
    while !rest.is_empty() {
        let (idx, avg) = rest
            .iter()
            .enumerate()
            .map(|(i, &p)| (i, s.average(&[p], &placed)))
            .max_by(|(i, x), (j, y)| x.total_cmp(y).then(j.cmp(i)))
            .expect("non-empty");
        let p = rest.remove(idx);
        let leaf = b.leaf(p);
        root = b.join(root, leaf, avg);
        placed.push(p);
    }
    Ok(b.finish(root))
}

fn collect_points(b: &TreeBuilder, node: usize) -> Vec<PointId> {
    let mut out = Vec::with_capacity(b.nodes[node].size);
    let mut stack = vec![node];
    while let Some(i) = stack.pop() {
        match (b.nodes[i].children, b.nodes[i].point) {
            (Some((l, r)), _) => {
                stack.push(l);
                stack.push(r);
            }
            (None, Some(p)) => out.push(p),
            (None, None) => unreachable!("leaf without a point"),
        }
    }
    out
}
