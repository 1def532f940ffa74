//! Average-linkage trees and the two queries every edit procedure needs:
//! the node where a set is first split, and the deepest node holding enough
//! of two sets.
//!
//! Every node's members occupy a contiguous range of the tree's leaf order,
//! so membership counts reduce to binary searches over leaf positions.

mod agglomerate;
mod robust;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::types::{ClusterId, Clustering, PointId, SimilarityMatrix};

pub use agglomerate::build_average_linkage;
pub use robust::{build_robust_tree, find_blobs, Blobs};

/// Handle to a node of one [`LinkageTree`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef(usize);

impl NodeRef {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Node {
    children: Option<(NodeRef, NodeRef)>,
    start: usize,
    end: usize,
    depth: usize,
    rank: Option<usize>,
    similarity: Option<f64>,
}

/// A binary merge tree over a set of points.
#[derive(Clone, Debug)]
pub struct LinkageTree {
    nodes: Vec<Node>,
    root: NodeRef,
    order: Vec<PointId>,
    position: HashMap<PointId, usize>,
}

/// Raw merge record used while a tree is being built.
#[derive(Clone, Debug)]
pub(crate) struct RawNode {
    pub(crate) children: Option<(usize, usize)>,
    pub(crate) point: Option<PointId>,
    pub(crate) min_point: PointId,
    pub(crate) size: usize,
    pub(crate) similarity: Option<f64>,
}

/// Accumulates leaves and merges; [`TreeBuilder::finish`] lays out the leaf order.
#[derive(Default)]
pub(crate) struct TreeBuilder {
    pub(crate) nodes: Vec<RawNode>,
}

impl TreeBuilder {
    pub(crate) fn leaf(&mut self, p: PointId) -> usize {
        self.nodes.push(RawNode {
            children: None,
            point: Some(p),
            min_point: p,
            size: 1,
            similarity: None,
        });
        self.nodes.len() - 1
    }

    /// Joins two subtrees; the child holding the smaller point id goes first.
    pub(crate) fn join(&mut self, a: usize, b: usize, similarity: f64) -> usize {
        let (a, b) = if self.nodes[a].min_point <= self.nodes[b].min_point {
            (a, b)
        } else {
            (b, a)
        };
        let node = RawNode {
            children: Some((a, b)),
            point: None,
            min_point: self.nodes[a].min_point,
            size: self.nodes[a].size + self.nodes[b].size,
            similarity: Some(similarity),
        };
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    pub(crate) fn finish(self, root: usize) -> LinkageTree {
        let raw = self.nodes;
        // Only nodes reachable from `root` end up in the tree.
        let mut remap = vec![usize::MAX; raw.len()];
        let mut reachable = Vec::new();
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            remap[i] = reachable.len();
            reachable.push(i);
            if let Some((a, b)) = raw[i].children {
                stack.push(b);
                stack.push(a);
            }
        }
        // Ranks follow creation order among internal nodes.
        let mut internal: Vec<usize> = reachable.iter().copied().filter(|&i| raw[i].children.is_some()).collect();
        internal.sort_unstable();
        let mut rank_of = vec![None; raw.len()];
        for (r, &i) in internal.iter().enumerate() {
            rank_of[i] = Some(r);
        }

        let mut nodes: Vec<Node> = reachable
            .iter()
            .map(|&i| Node {
                children: raw[i].children.map(|(a, b)| (NodeRef(remap[a]), NodeRef(remap[b]))),
                start: 0,
                end: 0,
                depth: 0,
                rank: rank_of[i],
                similarity: raw[i].similarity,
            })
            .collect();

        // Pre-order walk (left first) assigns leaf positions and depths.
        let mut order = Vec::with_capacity(raw[root].size);
        let mut stack = vec![(0usize, 0usize, false)];
        while let Some((i, depth, done)) = stack.pop() {
            if done {
                nodes[i].end = order.len();
                continue;
            }
            nodes[i].depth = depth;
            nodes[i].start = order.len();
            match nodes[i].children {
                None => {
                    order.push(raw[reachable[i]].point.expect("leaf has a point"));
                    nodes[i].end = order.len();
                }
                Some((a, b)) => {
                    stack.push((i, depth, true));
                    stack.push((b.0, depth + 1, false));
                    stack.push((a.0, depth + 1, false));
                }
            }
        }
        let position = order.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        LinkageTree {
            nodes,
            root: NodeRef(0),
            order,
            position,
        }
    }
}

/// Outcome of a laminarity check.
#[derive(Clone, Debug, PartialEq)]
pub struct Laminarity {
    /// First violating node in post-order and the target cluster it straddles.
    pub violation: Option<(NodeRef, ClusterId)>,
}

impl Laminarity {
    pub fn is_laminar(&self) -> bool {
        self.violation.is_none()
    }
}

impl LinkageTree {
    /// Builds a tree from an explicit merge list, scipy style: leaves get
    /// ids `0..m` in the order of `points`, merge `i` creates node `m + i`.
    pub fn from_merges(points: &[PointId], merges: &[(usize, usize)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("a tree needs at least one point"));
        }
        if merges.len() + 1 != points.len() {
            return Err(Error::domain(format!(
                "{} points need {} merges, got {}",
                points.len(),
                points.len() - 1,
                merges.len()
            )));
        }
        let mut b = TreeBuilder::default();
        for &p in points {
            b.leaf(p);
        }
        let mut used = vec![false; points.len() + merges.len()];
        for &(x, y) in merges {
            let limit = b.nodes.len();
            if x >= limit || y >= limit || x == y || used[x] || used[y] {
                return Err(Error::domain(format!("invalid merge ({x}, {y})")));
            }
            used[x] = true;
            used[y] = true;
            b.join(x, y, f64::NAN);
        }
        let root = b.nodes.len() - 1;
        let mut tree = b.finish(root);
        for n in &mut tree.nodes {
            n.similarity = None;
        }
        Ok(tree)
    }

    pub fn root(&self) -> NodeRef {
        self.root
    }

    /// Total number of nodes (`2m - 1` for `m` leaves).
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.order.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeRef> {
        (0..self.nodes.len()).map(NodeRef)
    }

    pub fn children(&self, node: NodeRef) -> Option<(NodeRef, NodeRef)> {
        self.nodes[node.0].children
    }

    /// Members of `node`, in leaf order.
    pub fn members(&self, node: NodeRef) -> &[PointId] {
        let n = &self.nodes[node.0];
        &self.order[n.start..n.end]
    }

    pub fn size(&self, node: NodeRef) -> usize {
        let n = &self.nodes[node.0];
        n.end - n.start
    }

    pub fn depth(&self, node: NodeRef) -> usize {
        self.nodes[node.0].depth
    }

    /// Position of `node` in the merge sequence; `None` for leaves.
    pub fn rank(&self, node: NodeRef) -> Option<usize> {
        self.nodes[node.0].rank
    }

    /// Average similarity between the two children at merge time.
    pub fn merge_similarity(&self, node: NodeRef) -> Option<f64> {
        self.nodes[node.0].similarity
    }

    /// All points of the tree in leaf order.
    pub fn points(&self) -> &[PointId] {
        &self.order
    }

    pub fn contains_point(&self, p: PointId) -> bool {
        self.position.contains_key(&p)
    }

    pub fn contains(&self, node: NodeRef, p: PointId) -> bool {
        let n = &self.nodes[node.0];
        self.position.get(&p).is_some_and(|&i| n.start <= i && i < n.end)
    }

    fn positions(&self, set: &[PointId]) -> Result<Vec<usize>> {
        let mut out = set
            .iter()
            .map(|p| self.position.get(p).copied().ok_or(Error::UnknownPoint(*p)))
            .collect::<Result<Vec<_>>>()?;
        out.sort_unstable();
        Ok(out)
    }

    fn count(&self, node: NodeRef, sorted_positions: &[usize]) -> usize {
        let n = &self.nodes[node.0];
        let lo = sorted_positions.partition_point(|&x| x < n.start);
        let hi = sorted_positions.partition_point(|&x| x < n.end);
        hi - lo
    }

    /// `|node ∩ set|`.
    pub fn intersection_size(&self, node: NodeRef, set: &[PointId]) -> Result<usize> {
        Ok(self.count(node, &self.positions(set)?))
    }

    /// The deepest node containing every point of `members`; its two
    /// children separate `members` into two non-empty parts.
    pub fn find_split_node(&self, members: &[PointId]) -> Result<NodeRef> {
        if members.len() < 2 {
            return Err(Error::precondition("find_split_node needs at least two points"));
        }
        let pos = self.positions(members)?;
        let (lo, hi) = (pos[0], pos[pos.len() - 1]);
        let mut node = self.root;
        while let Some((a, b)) = self.children(node) {
            let next = [a, b].into_iter().find(|c| {
                let n = &self.nodes[c.0];
                n.start <= lo && hi < n.end
            });
            match next {
                Some(c) => node = c,
                None => break,
            }
        }
        debug_assert!(self.children(node).is_some());
        Ok(node)
    }

    /// The deepest node `N` with `|N ∩ ci| >= eta1 |ci|` and
    /// `|N ∩ cj| >= eta2 |cj|`. Among equally deep candidates the first in
    /// post-order wins. The root always qualifies.
    pub fn find_merge_node(&self, ci: &[PointId], cj: &[PointId], eta1: f64, eta2: f64) -> Result<NodeRef> {
        if ci.is_empty() || cj.is_empty() {
            return Err(Error::precondition("find_merge_node needs two non-empty sets"));
        }
        for eta in [eta1, eta2] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::precondition(format!("eta must lie in (0, 1], got {eta}")));
            }
        }
        let pi = self.positions(ci)?;
        let pj = self.positions(cj)?;
        let qualifies = |node: NodeRef| {
            crate::model::meets_fraction(self.count(node, &pi), ci.len(), eta1)
                && crate::model::meets_fraction(self.count(node, &pj), cj.len(), eta2)
        };
        // Qualifying nodes are closed under ancestors, so pruning at the
        // first non-qualifying node visits exactly the qualifying subtree.
        let mut best: Option<NodeRef> = None;
        let mut stack = vec![(self.root, false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                if best.is_none_or(|b| self.depth(node) > self.depth(b)) {
                    best = Some(node);
                }
                continue;
            }
            stack.push((node, true));
            if let Some((a, b)) = self.children(node) {
                for c in [b, a] {
                    if qualifies(c) {
                        stack.push((c, false));
                    }
                }
            }
        }
        Ok(best.unwrap_or(self.root))
    }

    /// Checks every node against every target cluster, restricted to the
    /// points of this tree.
    pub fn laminarity(&self, target: &Clustering) -> Result<Laminarity> {
        let mut label_total: HashMap<ClusterId, usize> = HashMap::new();
        for &p in &self.order {
            if p >= target.n() {
                return Err(Error::UnknownPoint(p));
            }
            *label_total.entry(target.cluster_of(p)).or_insert(0) += 1;
        }
        for node in self.post_order() {
            let mut counts: HashMap<ClusterId, usize> = HashMap::new();
            for &p in self.members(node) {
                *counts.entry(target.cluster_of(p)).or_insert(0) += 1;
            }
            if counts.len() <= 1 {
                continue;
            }
            // Several labels inside N: each must be wholly contained.
            let mut straddled: Vec<ClusterId> = counts
                .iter()
                .filter(|(l, &c)| c != label_total[l])
                .map(|(&l, _)| l)
                .collect();
            straddled.sort_unstable();
            if let Some(&l) = straddled.first() {
                return Ok(Laminarity {
                    violation: Some((node, l)),
                });
            }
        }
        Ok(Laminarity { violation: None })
    }

    pub fn is_laminar(&self, target: &Clustering) -> Result<bool> {
        Ok(self.laminarity(target)?.is_laminar())
    }

    /// Nodes in post-order, left child first.
    pub fn post_order(&self) -> Vec<NodeRef> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                out.push(node);
                continue;
            }
            stack.push((node, true));
            if let Some((a, b)) = self.children(node) {
                stack.push((b, false));
                stack.push((a, false));
            }
        }
        out
    }

    /// Nested parenthesised form with integer leaf ids, e.g. `((0,1),2);`.
    pub fn to_newick(&self) -> String {
        let mut out = String::new();
        self.write_newick(self.root, &mut out);
        out.push(';');
        out
    }

    fn write_newick(&self, node: NodeRef, out: &mut String) {
        match self.children(node) {
            None => {
                let _ = write!(out, "{}", self.members(node)[0]);
            }
            Some((a, b)) => {
                out.push('(');
                self.write_newick(a, out);
                out.push(',');
                self.write_newick(b, out);
                out.push(')');
            }
        }
    }

    /// The tree as a set of member sets, for structural comparison.
    pub fn clusters(&self) -> Vec<Vec<PointId>> {
        let mut out: Vec<Vec<PointId>> = self
            .nodes()
            .map(|n| {
                let mut m = self.members(n).to_vec();
                m.sort_unstable();
                m
            })
            .collect();
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out
    }
}

/// Orders merge candidates: higher average similarity first, then the
/// lexicographically smaller `(min id, other min id)` pair.
pub(crate) fn candidate_order(a: (f64, (PointId, PointId)), b: (f64, (PointId, PointId))) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| b.1.cmp(&a.1))
}

/// Rejects empty, duplicated or out-of-range point lists.
pub(crate) fn check_points(s: &SimilarityMatrix, points: &[PointId]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::domain("cannot build a tree over an empty point set"));
    }
    let mut seen = std::collections::HashSet::with_capacity(points.len());
    for &p in points {
        if p >= s.n() {
            return Err(Error::UnknownPoint(p));
        }
        if !seen.insert(p) {
            return Err(Error::domain(format!("point {p} listed twice")));
        }
    }
    Ok(())
}
