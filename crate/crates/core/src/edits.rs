//! Split and merge procedures.
//!
//! Every procedure only reassigns points of the clusters named in the
//! request. Each changed cluster is removed and re-added under a fresh id,
//! so `removed` lists the request's clusters and `touched_points` their
//! members.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linkage::{build_average_linkage, build_robust_tree, LinkageTree, NodeRef};
use crate::model::{meets_fraction, EditRequest, Model, ModelConfig, TreeMode};
use crate::types::{Cluster, ClusterId, Clustering, PointId, Purity, SimilarityMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    /// A cluster was replaced by two halves.
    SplitApplied,
    /// Two clusters were replaced by their union.
    MergeCombined,
    /// A pure cluster was carved out of the two request clusters.
    MergeCarvedPure,
    /// The union was re-split into two different clusters.
    MergeResplit,
    /// Points moved from the smaller cluster into the larger one.
    CcMergeMoved,
}

impl fmt::Display for EditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EditKind::SplitApplied => "split_applied",
            EditKind::MergeCombined => "merge_combined",
            EditKind::MergeCarvedPure => "merge_carved_pure",
            EditKind::MergeResplit => "merge_resplit",
            EditKind::CcMergeMoved => "cc_merge_moved",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditResult {
    pub kind: EditKind,
    pub removed: Vec<ClusterId>,
    pub added: Vec<Cluster>,
    /// Sorted points whose cluster id changed.
    pub touched_points: Vec<PointId>,
    /// A tree merge found no qualifying node below the root and used the root.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub root_fallback: bool,
}

/// Similarities plus the prebuilt global tree, if the configuration uses one.
#[derive(Clone, Copy, Debug)]
pub struct EditContext<'a> {
    pub s: &'a SimilarityMatrix,
    pub tree: Option<&'a LinkageTree>,
}

impl<'a> EditContext<'a> {
    fn global_tree(&self) -> Result<&'a LinkageTree> {
        self.tree
            .ok_or_else(|| Error::precondition("this tree mode needs a prebuilt global tree"))
    }
}

/// Builds the global tree a configuration needs over all points: plain
/// average linkage for `Global`, blob-based for `RobustGlobal`, none for
/// the local modes.
pub fn build_global_tree(s: &SimilarityMatrix, cfg: &ModelConfig) -> Result<Option<LinkageTree>> {
    let points: Vec<PointId> = (0..s.n()).collect();
    match cfg.tree_mode {
        TreeMode::Global => build_average_linkage(s, &points).map(Some),
        TreeMode::RobustGlobal => build_robust_tree(s, &points, cfg.min_blob).map(Some),
        TreeMode::Local | TreeMode::ThresholdGraph => Ok(None),
    }
}

/// Runs the procedure the configuration selects for `req`.
///
/// | request | Global / RobustGlobal | Local | ThresholdGraph |
/// |---|---|---|---|
/// | split | global tree | local tree | local tree |
/// | eta merge | global tree | local tree | neighbour graph |
/// | cc / unrestricted merge | global tree | local tree | local tree |
pub fn apply(c: &mut Clustering, req: &EditRequest, cfg: &ModelConfig, ctx: EditContext<'_>) -> Result<EditResult> {
    cfg.validate()?;
    req.validate(c)?;
    let global = matches!(cfg.tree_mode, TreeMode::Global | TreeMode::RobustGlobal);
    match *req {
        EditRequest::Split { cluster } => {
            if global {
                split_global(c, cluster, ctx.global_tree()?)
            } else {
                split_local(c, cluster, ctx.s)
            }
        }
        EditRequest::Merge { first, second } => match (cfg.model, cfg.tree_mode) {
            (Model::EtaMerge, TreeMode::ThresholdGraph) => merge_threshold(c, first, second, cfg.eta, ctx.s),
            (Model::EtaMerge, _) if global => merge_eta(c, first, second, cfg.eta, ctx.global_tree()?),
            (Model::EtaMerge, _) => merge_local(c, first, second, cfg.eta, ctx.s),
            (Model::EtaMergeCc, _) if global => merge_cc(c, first, second, cfg.eta, ctx.global_tree()?),
            (Model::EtaMergeCc, _) => {
                let t = local_tree(c, &[first, second], ctx.s)?;
                merge_cc(c, first, second, cfg.eta, &t)
            }
            (Model::UnrestrictedMerge, _) if global => merge_unrestricted(c, first, second, ctx.global_tree()?),
            (Model::UnrestrictedMerge, _) => {
                let t = local_tree(c, &[first, second], ctx.s)?;
                merge_unrestricted(c, first, second, &t)
            }
        },
    }
}

fn local_tree(c: &Clustering, ids: &[ClusterId], s: &SimilarityMatrix) -> Result<LinkageTree> {
    let mut points = Vec::new();
    for &id in ids {
        points.extend_from_slice(c.get(id)?.members());
    }
    if points.iter().any(|&p| p >= s.n()) || s.n() != c.n() {
        return Err(Error::domain(format!(
            "similarity matrix covers {} points, clustering {}",
            s.n(),
            c.n()
        )));
    }
    build_average_linkage(s, &points)
}

fn distinct(first: ClusterId, second: ClusterId) -> Result<()> {
    if first == second {
        return Err(Error::precondition(format!("cannot merge cluster {first} with itself")));
    }
    Ok(())
}

/// Replaces `removed` and records the edit.
fn commit(
    c: &mut Clustering,
    kind: EditKind,
    removed: Vec<ClusterId>,
    added: Vec<(Vec<PointId>, Purity)>,
    root_fallback: bool,
) -> EditResult {
    let mut touched: Vec<PointId> = removed
        .iter()
        .flat_map(|&id| c.get(id).expect("removed cluster exists").members().to_vec())
        .collect();
    touched.sort_unstable();
    let added = c.replace(&removed, added);
    EditResult {
        kind,
        removed,
        added,
        touched_points: touched,
        root_fallback,
    }
}

/// Members of `set` under each child of `node`.
fn split_by_children(t: &LinkageTree, node: NodeRef, set: &[PointId]) -> (Vec<PointId>, Vec<PointId>) {
    let (a, _) = t.children(node).expect("split node is internal");
    set.iter().partition(|&&p| t.contains(a, p))
}

fn split_with_tree(c: &mut Clustering, id: ClusterId, t: &LinkageTree) -> Result<EditResult> {
    let members = c.get(id)?.members().to_vec();
    if members.len() < 2 {
        return Err(Error::SplitInfeasible(id));
    }
    let node = t.find_split_node(&members)?;
    let (left, right) = split_by_children(t, node, &members);
    Ok(commit(
        c,
        EditKind::SplitApplied,
        vec![id],
        vec![(left, Purity::Impure), (right, Purity::Impure)],
        false,
    ))
}

/// Splits a cluster where the global tree first separates its members.
/// Both halves are marked impure.
pub fn split_global(c: &mut Clustering, id: ClusterId, t_glob: &LinkageTree) -> Result<EditResult> {
    split_with_tree(c, id, t_glob)
}

/// Splits a cluster into the root children of the average-linkage tree
/// built over its own points.
pub fn split_local(c: &mut Clustering, id: ClusterId, s: &SimilarityMatrix) -> Result<EditResult> {
    if c.get(id)?.len() < 2 {
        return Err(Error::SplitInfeasible(id));
    }
    let t = local_tree(c, &[id], s)?;
    split_with_tree(c, id, &t)
}

fn fraction_for(cluster: &Cluster, eta: f64) -> f64 {
    if cluster.purity.is_pure() {
        1.0
    } else {
        eta
    }
}

/// Carves `carved` out of both clusters as a new pure cluster.
fn carve(c: &mut Clustering, i: ClusterId, j: ClusterId, carved: &[PointId], root_fallback: bool) -> Result<EditResult> {
    let mut in_carved = vec![false; c.n()];
    for &p in carved {
        in_carved[p] = true;
    }
    let ci = c.get(i)?;
    let cj = c.get(j)?;
    let rest_i: Vec<PointId> = ci.members().iter().copied().filter(|&p| !in_carved[p]).collect();
    let rest_j: Vec<PointId> = cj.members().iter().copied().filter(|&p| !in_carved[p]).collect();
    let added = vec![(rest_i, ci.purity), (rest_j, cj.purity), (carved.to_vec(), Purity::Pure)];
    Ok(commit(c, EditKind::MergeCarvedPure, vec![i, j], added, root_fallback))
}

fn merge_with_tree(c: &mut Clustering, i: ClusterId, j: ClusterId, eta: f64, t: &LinkageTree) -> Result<EditResult> {
    distinct(i, j)?;
    let (ci, cj) = (c.get(i)?, c.get(j)?);
    let node = t.find_merge_node(ci.members(), cj.members(), fraction_for(ci, eta), fraction_for(cj, eta))?;
    let carved: Vec<PointId> = ci
        .members()
        .iter()
        .chain(cj.members())
        .copied()
        .filter(|&p| t.contains(node, p))
        .collect();
    carve(c, i, j, &carved, node == t.root())
}

/// Carves the part of both clusters under the deepest tree node that holds
/// enough of each (all of a pure cluster, an `eta` fraction of an impure
/// one) into a new pure cluster. Emptied clusters disappear.
pub fn merge_eta(c: &mut Clustering, i: ClusterId, j: ClusterId, eta: f64, t_glob: &LinkageTree) -> Result<EditResult> {
    merge_with_tree(c, i, j, eta, t_glob)
}

/// [`merge_eta`] on the tree built over the two clusters' points only.
pub fn merge_local(c: &mut Clustering, i: ClusterId, j: ClusterId, eta: f64, s: &SimilarityMatrix) -> Result<EditResult> {
    distinct(i, j)?;
    let t = local_tree(c, &[i, j], s)?;
    merge_with_tree(c, i, j, eta, &t)
}

/// Moves the other cluster's points under the deepest node holding an
/// `eta` fraction of both into the larger cluster (smaller id on equal
/// sizes). No cluster is created.
pub fn merge_cc(c: &mut Clustering, i: ClusterId, j: ClusterId, eta: f64, t: &LinkageTree) -> Result<EditResult> {
    distinct(i, j)?;
    let (ci, cj) = (c.get(i)?, c.get(j)?);
    let node = t.find_merge_node(ci.members(), cj.members(), eta, eta)?;
    let (big, small) = if ci.len() > cj.len() || (ci.len() == cj.len() && i < j) {
        (ci, cj)
    } else {
        (cj, ci)
    };
    let (moved, kept): (Vec<PointId>, Vec<PointId>) = small.members().iter().partition(|&&p| t.contains(node, p));
    let mut grown = big.members().to_vec();
    grown.extend(moved);
    let removed = vec![big.id, small.id];
    let added = vec![(grown, big.purity), (kept, small.purity)];
    Ok(commit(c, EditKind::CcMergeMoved, removed, added, node == t.root()))
}

/// Grows a graph over the two clusters' points, adding pairs in decreasing
/// similarity (ties by point pair), and carves out the first connected
/// component holding enough of each cluster as a new pure cluster.
pub fn merge_threshold(c: &mut Clustering, i: ClusterId, j: ClusterId, eta: f64, s: &SimilarityMatrix) -> Result<EditResult> {
    distinct(i, j)?;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::precondition(format!("eta must lie in (0, 1], got {eta}")));
    }
    let (ci, cj) = (c.get(i)?, c.get(j)?);
    if s.n() != c.n() {
        return Err(Error::domain(format!("similarity matrix covers {} points, clustering {}", s.n(), c.n())));
    }
    let (eta1, eta2) = (fraction_for(ci, eta), fraction_for(cj, eta));
    let points: Vec<PointId> = ci.members().iter().chain(cj.members()).copied().collect();
    let m = points.len();
    let ni = ci.len();

    let mut edges: Vec<(f64, PointId, PointId, usize, usize)> = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        for b in (a + 1)..m {
            let (x, y) = (points[a].min(points[b]), points[a].max(points[b]));
            edges.push((s.get(x, y), x, y, a, b));
        }
    }
    edges.sort_by(|e, f| f.0.total_cmp(&e.0).then((e.1, e.2).cmp(&(f.1, f.2))));

    // Union-find with per-component counts from each cluster.
    let mut parent: Vec<usize> = (0..m).collect();
    let mut count: Vec<(usize, usize)> = (0..m).map(|a| if a < ni { (1, 0) } else { (0, 1) }).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut winner = None;
    for &(_, _, _, a, b) in &edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            continue;
        }
        parent[rb] = ra;
        count[ra] = (count[ra].0 + count[rb].0, count[ra].1 + count[rb].1);
        if meets_fraction(count[ra].0, ni, eta1) && meets_fraction(count[ra].1, m - ni, eta2) {
            winner = Some(ra);
            break;
        }
    }
    let root = winner.expect("the full graph is one qualifying component");
    let carved: Vec<PointId> = (0..m).filter(|&a| find(&mut parent, a) == root).map(|a| points[a]).collect();
    carve(c, i, j, &carved, false)
}

/// Splits the union of the two clusters as a split request would. If the
/// halves reproduce the inputs the union is kept (pure iff both inputs are
/// pure), otherwise the two halves replace the inputs as impure clusters.
pub fn merge_unrestricted(c: &mut Clustering, i: ClusterId, j: ClusterId, t: &LinkageTree) -> Result<EditResult> {
    distinct(i, j)?;
    let (ci, cj) = (c.get(i)?, c.get(j)?);
    let mut union: Vec<PointId> = ci.members().iter().chain(cj.members()).copied().collect();
    union.sort_unstable();
    let node = t.find_split_node(&union)?;
    let (mut left, mut right) = split_by_children(t, node, &union);
    left.sort_unstable();
    right.sort_unstable();
    let same = (left == ci.members() && right == cj.members()) || (left == cj.members() && right == ci.members());
    if same {
        let purity = if ci.purity.is_pure() && cj.purity.is_pure() {
            Purity::Pure
        } else {
            Purity::Impure
        };
        Ok(commit(c, EditKind::MergeCombined, vec![i, j], vec![(union, purity)], false))
    } else {
        Ok(commit(
            c,
            EditKind::MergeResplit,
            vec![i, j],
            vec![(left, Purity::Impure), (right, Purity::Impure)],
            false,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::error_report;

    fn planted() -> SimilarityMatrix {
        SimilarityMatrix::from_fn(6, |i, j| if (i < 3) == (j < 3) { 0.9 } else { 0.1 }).unwrap()
    }

    fn target() -> Clustering {
        Clustering::from_groups(6, &[vec![0, 1, 2], vec![3, 4, 5]]).unwrap()
    }

    fn tree() -> LinkageTree {
        build_average_linkage(&planted(), &[0, 1, 2, 3, 4, 5]).unwrap()
    }

    fn id_of(c: &Clustering, p: PointId) -> ClusterId {
        c.cluster_of(p)
    }

    fn added_sets(r: &EditResult) -> Vec<(Vec<PointId>, Purity)> {
        let mut v: Vec<_> = r.added.iter().map(|c| (c.members().to_vec(), c.purity)).collect();
        v.sort();
        v
    }

    #[test]
    fn global_split_of_straddling_cluster() {
        let mut c = Clustering::from_groups(6, &[vec![0, 1], vec![2, 3], vec![4], vec![5]]).unwrap();
        assert_eq!(error_report(&c, &target()).unwrap().delta_o, 1);
        let r = split_global(&mut c, ClusterId(1), &tree()).unwrap();
        assert_eq!(r.kind, EditKind::SplitApplied);
        assert_eq!(added_sets(&r), vec![(vec![2], Purity::Impure), (vec![3], Purity::Impure)]);
        assert_eq!(r.touched_points, vec![2, 3]);
        assert_eq!(error_report(&c, &target()).unwrap().delta_o, 0);
        assert!(c.get(ClusterId(1)).is_err());
    }

    #[test]
    fn split_of_a_tree_child_descends_one_level() {
        let t = tree();
        let mut c = Clustering::from_groups(6, &[vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        let r = split_global(&mut c, ClusterId(0), &t).unwrap();
        let (a, b) = t.children(t.root()).unwrap();
        let child = if t.contains(a, 0) { a } else { b };
        let (g1, g2) = t.children(child).unwrap();
        let mut expected = vec![t.members(g1).to_vec(), t.members(g2).to_vec()];
        for e in &mut expected {
            e.sort_unstable();
        }
        expected.sort();
        let got: Vec<Vec<PointId>> = added_sets(&r).into_iter().map(|x| x.0).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn singleton_split_is_infeasible() {
        let mut c = Clustering::from_groups(6, &[vec![0, 1, 2, 3, 4], vec![5]]).unwrap();
        assert!(matches!(split_global(&mut c, ClusterId(1), &tree()), Err(Error::SplitInfeasible(_))));
        assert!(matches!(split_local(&mut c, ClusterId(1), &planted()), Err(Error::SplitInfeasible(_))));
    }

    #[test]
    fn eta_merge_carves_pure_cluster() {
        let mut c = Clustering::from_groups(6, &[vec![0, 1], vec![2], vec![3, 4, 5]]).unwrap();
        let r = merge_eta(&mut c, ClusterId(0), ClusterId(1), 0.6, &tree()).unwrap();
        assert_eq!(r.kind, EditKind::MergeCarvedPure);
        assert_eq!(r.removed, vec![ClusterId(0), ClusterId(1)]);
        assert_eq!(added_sets(&r), vec![(vec![0, 1, 2], Purity::Pure)]);
        assert_eq!(c.len(), 2);
        assert!(!r.root_fallback);
    }

    #[test]
    fn pure_inputs_merge_whole() {
        let mut c = Clustering::from_groups(6, &[vec![0], vec![1, 2], vec![3, 4, 5]]).unwrap();
        c.set_purity(ClusterId(0), Purity::Pure).unwrap();
        c.set_purity(ClusterId(1), Purity::Pure).unwrap();
        let r = merge_eta(&mut c, ClusterId(0), ClusterId(1), 0.6, &tree()).unwrap();
        assert_eq!(added_sets(&r), vec![(vec![0, 1, 2], Purity::Pure)]);
        let mut c = Clustering::from_groups(6, &[vec![0], vec![1, 2], vec![3, 4, 5]]).unwrap();
        c.set_purity(ClusterId(0), Purity::Pure).unwrap();
        c.set_purity(ClusterId(1), Purity::Pure).unwrap();
        let r = merge_local(&mut c, ClusterId(0), ClusterId(1), 0.6, &planted()).unwrap();
        assert_eq!(added_sets(&r), vec![(vec![0, 1, 2], Purity::Pure)]);
    }

    #[test]
    fn eta_merge_keeps_remainders_with_their_purity() {
        // {0,1,3} impure and {2} pure: the node {0,1,2} holds 2/3 >= 0.6 of the first.
        let mut c = Clustering::from_groups(6, &[vec![0, 1, 3], vec![2], vec![4, 5]]).unwrap();
        c.set_purity(ClusterId(1), Purity::Pure).unwrap();
        let r = merge_eta(&mut c, ClusterId(0), ClusterId(1), 0.6, &tree()).unwrap();
        assert_eq!(added_sets(&r), vec![(vec![0, 1, 2], Purity::Pure), (vec![3], Purity::Impure)]);
        assert_eq!(r.touched_points, vec![0, 1, 2, 3]);
    }

    #[test]
    fn local_merge_mirrors_global_merge() {
        let mut c = Clustering::from_groups(6, &[vec![0, 1], vec![2], vec![3, 4, 5]]).unwrap();
        let r = merge_local(&mut c, ClusterId(0), ClusterId(1), 0.6, &planted()).unwrap();
        assert_eq!(added_sets(&r), vec![(vec![0, 1, 2], Purity::Pure)]);
        // The local tree over {0,1,3,4} puts the root above both targets.
        let mut c = Clustering::from_groups(6, &[vec![0, 3], vec![1, 4], vec![2], vec![5]]).unwrap();
        let r = merge_local(&mut c, ClusterId(0), ClusterId(1), 0.5, &planted()).unwrap();
        let carved = r.added.iter().find(|x| x.purity.is_pure()).unwrap();
        assert!(carved.members() == [0, 1] || carved.members() == [3, 4]);
    }

    #[test]
    fn cc_merge_moves_into_larger() {
        let mut c = Clustering::from_groups(6, &[vec![0, 1], vec![2], vec![3, 4, 5]]).unwrap();
        let r = merge_cc(&mut c, ClusterId(0), ClusterId(1), 0.7, &tree()).unwrap();
        assert_eq!(r.kind, EditKind::CcMergeMoved);
        assert_eq!(added_sets(&r), vec![(vec![0, 1, 2], Purity::Impure)]);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn cc_merge_equal_sizes_goes_to_smaller_id() {
        let t = tree();
        let mut c = Clustering::from_groups(6, &[vec![0, 3], vec![1, 4], vec![2, 5]]).unwrap();
        let r = merge_cc(&mut c, ClusterId(1), ClusterId(0), 1.0, &t).unwrap();
        // eta = 1 forces the root: the whole of cluster 1 moves into cluster 0.
        assert!(r.root_fallback);
        assert_eq!(r.removed, vec![ClusterId(0), ClusterId(1)]);
        assert_eq!(added_sets(&r), vec![(vec![0, 1, 3, 4], Purity::Impure)]);
        assert_eq!(c.canonical(), vec![vec![0, 1, 3, 4], vec![2, 5]]);
    }

    #[test]
    fn local_split_separates_targets() {
        let mut c = Clustering::from_groups(6, &[vec![0, 1, 3], vec![2], vec![4, 5]]).unwrap();
        let r = split_local(&mut c, ClusterId(0), &planted()).unwrap();
        assert_eq!(added_sets(&r), vec![(vec![0, 1], Purity::Impure), (vec![3], Purity::Impure)]);
        let mut c = Clustering::from_groups(6, &[vec![0, 4], vec![1, 2, 3, 5]]).unwrap();
        let r = split_local(&mut c, ClusterId(0), &planted()).unwrap();
        assert_eq!(added_sets(&r), vec![(vec![0], Purity::Impure), (vec![4], Purity::Impure)]);
    }

    #[test]
    fn threshold_merge_stops_at_first_qualifying_component() {
        let mut c = Clustering::from_groups(6, &[vec![0, 1], vec![2], vec![3, 4, 5]]).unwrap();
        let r = merge_threshold(&mut c, ClusterId(0), ClusterId(1), 0.4, &planted()).unwrap();
        assert_eq!(added_sets(&r), vec![(vec![0, 1, 2], Purity::Pure)]);
        // Small eta: carve only what is needed from a straddling cluster.
        let mut c = Clustering::from_groups(6, &[vec![0, 3, 4, 5], vec![1], vec![2]]).unwrap();
        let r = merge_threshold(&mut c, ClusterId(0), ClusterId(1), 0.2, &planted()).unwrap();
        assert_eq!(added_sets(&r), vec![(vec![0, 1], Purity::Pure), (vec![3, 4, 5], Purity::Impure)]);
    }

    #[test]
    fn threshold_merge_of_pure_inputs_takes_both_whole() {
        let mut c = Clustering::from_groups(6, &[vec![0], vec![1, 2], vec![3, 4, 5]]).unwrap();
        c.set_purity(ClusterId(0), Purity::Pure).unwrap();
        c.set_purity(ClusterId(1), Purity::Pure).unwrap();
        let r = merge_threshold(&mut c, ClusterId(0), ClusterId(1), 1.0, &planted()).unwrap();
        assert_eq!(added_sets(&r), vec![(vec![0, 1, 2], Purity::Pure)]);
    }

    #[test]
    fn unrestricted_merge_resplits_or_combines() {
        let t = tree();
        let mut c = Clustering::from_groups(6, &[vec![0, 1], vec![2, 3], vec![4], vec![5]]).unwrap();
        let du = error_report(&c, &target()).unwrap().delta_u;
        let r = merge_unrestricted(&mut c, ClusterId(0), ClusterId(1), &t).unwrap();
        assert_eq!(r.kind, EditKind::MergeResplit);
        assert_eq!(added_sets(&r), vec![(vec![0, 1, 2], Purity::Impure), (vec![3], Purity::Impure)]);
        assert!(error_report(&c, &target()).unwrap().delta_u < du);

        // Ties merge 3 and 4 first, so {4} and {5} split apart as given.
        let (a, b) = (id_of(&c, 4), id_of(&c, 5));
        let r = merge_unrestricted(&mut c, a, b, &t).unwrap();
        assert_eq!(r.kind, EditKind::MergeCombined);
        assert_eq!(added_sets(&r), vec![(vec![4, 5], Purity::Impure)]);
    }

    #[test]
    fn requests_naming_one_cluster_twice_are_rejected() {
        let mut c = target();
        let s = planted();
        let t = tree();
        let id = ClusterId(0);
        assert!(merge_eta(&mut c, id, id, 0.6, &t).is_err());
        assert!(merge_cc(&mut c, id, id, 0.6, &t).is_err());
        assert!(merge_local(&mut c, id, id, 0.6, &s).is_err());
        assert!(merge_threshold(&mut c, id, id, 0.6, &s).is_err());
        assert!(merge_unrestricted(&mut c, id, id, &t).is_err());
        assert!(merge_eta(&mut c, id, ClusterId(9), 0.6, &t).is_err());
    }

    #[test]
    fn apply_dispatches_per_config() {
        let s = planted();
        let t = tree();
        let ctx = EditContext { s: &s, tree: Some(&t) };
        let split = EditRequest::Split { cluster: ClusterId(1) };
        let w1 = || Clustering::from_groups(6, &[vec![0, 1], vec![2, 3], vec![4], vec![5]]).unwrap();

        let cfg = ModelConfig::new(Model::EtaMerge, 0.6, TreeMode::Global);
        assert_eq!(apply(&mut w1(), &split, &cfg, ctx).unwrap().kind, EditKind::SplitApplied);

        let merge = EditRequest::Merge { first: ClusterId(0), second: ClusterId(1) };
        let cfg = ModelConfig::new(Model::UnrestrictedMerge, 0.6, TreeMode::Global);
        assert_eq!(apply(&mut w1(), &merge, &cfg, ctx).unwrap().kind, EditKind::MergeResplit);

        let cfg = ModelConfig::new(Model::EtaMerge, 0.6, TreeMode::Local);
        let local = EditContext { s: &s, tree: None };
        assert_eq!(apply(&mut w1(), &split, &cfg, local).unwrap().kind, EditKind::SplitApplied);

        let cfg = ModelConfig::new(Model::EtaMergeCc, 0.75, TreeMode::Global);
        let merge = EditRequest::Merge { first: ClusterId(2), second: ClusterId(3) };
        assert_eq!(apply(&mut w1(), &merge, &cfg, ctx).unwrap().kind, EditKind::CcMergeMoved);

        let cfg = ModelConfig::new(Model::EtaMerge, 0.6, TreeMode::Global);
        assert!(matches!(apply(&mut w1(), &split, &cfg, local), Err(Error::Precondition(_))));
        let bad = EditRequest::Merge { first: ClusterId(0), second: ClusterId(0) };
        assert!(apply(&mut w1(), &bad, &cfg, ctx).is_err());
    }

    #[test]
    fn global_tree_per_mode() {
        let s = planted();
        let mut cfg = ModelConfig::new(Model::EtaMerge, 0.7, TreeMode::Local);
        assert!(build_global_tree(&s, &cfg).unwrap().is_none());
        cfg.tree_mode = TreeMode::RobustGlobal;
        let t = build_global_tree(&s, &cfg).unwrap().unwrap();
        assert!(t.is_laminar(&target()).unwrap());
    }
}
