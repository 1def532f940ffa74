//! Oracle models, engine configuration, edit requests and the feasibility
//! predicates that define which requests an oracle may issue.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Contingency;
use crate::types::{ClusterId, Clustering};

/// Which oracle model (and matching merge procedure) is in force.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Merges need an `eta` fraction of each cluster inside one target
    /// cluster; merges carve a new pure cluster.
    EtaMerge,
    /// Same requests, but merges move points into the larger cluster
    /// (correlation-clustering objective).
    EtaMergeCc,
    /// Merges need a single shared target cluster; merges either combine or
    /// re-split the union.
    UnrestrictedMerge,
}

/// Which similarity structure the edit procedures consult.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeMode {
    /// Average-linkage tree over all points, built once.
    Global,
    /// Average-linkage tree over only the points of the request.
    Local,
    /// Local splits plus threshold-graph merges.
    ThresholdGraph,
    /// Blob-based global tree that pushes isolated points to the top.
    RobustGlobal,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::EtaMerge => "eta",
            Model::EtaMergeCc => "cc",
            Model::UnrestrictedMerge => "unrestricted",
        })
    }
}

impl fmt::Display for TreeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TreeMode::Global => "global",
            TreeMode::Local => "local",
            TreeMode::ThresholdGraph => "threshold",
            TreeMode::RobustGlobal => "robust",
        })
    }
}

pub const DEFAULT_MIN_BLOB: usize = 3;

fn default_min_blob() -> usize {
    DEFAULT_MIN_BLOB
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: Model,
    pub eta: f64,
    pub tree_mode: TreeMode,
    /// Minimum blob size for [`TreeMode::RobustGlobal`].
    #[serde(default = "default_min_blob")]
    pub min_blob: usize,
}

/// A configuration outside the range where convergence is guaranteed.
/// Runs proceed anyway; the warning is carried in results metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelWarning {
    pub message: String,
}

impl ModelConfig {
    pub fn new(model: Model, eta: f64, tree_mode: TreeMode) -> Self {
        ModelConfig {
            model,
            eta,
            tree_mode,
            min_blob: DEFAULT_MIN_BLOB,
        }
    }

    /// Hard validation: `eta` must lie in `(0, 1]` and `min_blob >= 1`.
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::domain(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if self.min_blob == 0 {
            return Err(Error::domain("min_blob must be at least 1"));
        }
        Ok(())
    }

    /// Soft checks against the guarantee ranges of each procedure.
    pub fn warnings(&self) -> Vec<ModelWarning> {
        let mut out = Vec::new();
        match self.model {
            Model::EtaMerge => match self.tree_mode {
                TreeMode::ThresholdGraph => {}
                _ if self.eta <= 0.5 => out.push(ModelWarning {
                    message: format!(
                        "eta={} <= 0.5: tree-based merges are only guaranteed pure for eta > 0.5; \
                         deepest-node ties are resolved by post-order position",
                        self.eta
                    ),
                }),
                _ => {}
            },
            Model::EtaMergeCc if self.eta <= 2.0 / 3.0 => out.push(ModelWarning {
                message: format!(
                    "eta={} <= 2/3: correlation-clustering merges may not reduce the cc error",
                    self.eta
                ),
            }),
            _ => {}
        }
        if self.tree_mode == TreeMode::ThresholdGraph && self.model != Model::EtaMerge {
            out.push(ModelWarning {
                message: format!(
                    "threshold-graph merges only apply to the eta-merge model; {} merges use local trees",
                    self.model
                ),
            });
        }
        out
    }
}

/// A split or merge request from the oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EditRequest {
    Split { cluster: ClusterId },
    Merge { first: ClusterId, second: ClusterId },
}

impl EditRequest {
    pub fn clusters(&self) -> Vec<ClusterId> {
        match *self {
            EditRequest::Split { cluster } => vec![cluster],
            EditRequest::Merge { first, second } => vec![first, second],
        }
    }

    pub fn is_split(&self) -> bool {
        matches!(self, EditRequest::Split { .. })
    }

    /// Checks the request against the current clustering.
    pub fn validate(&self, c: &Clustering) -> Result<()> {
        for id in self.clusters() {
            c.get(id)?;
        }
        if let EditRequest::Merge { first, second } = *self {
            if first == second {
                return Err(Error::precondition(format!("cannot merge cluster {first} with itself")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for EditRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EditRequest::Split { cluster } => write!(f, "split({cluster})"),
            EditRequest::Merge { first, second } => write!(f, "merge({first}, {second})"),
        }
    }
}

/// `count >= eta * size` with a small slack for binary rounding of `eta`.
pub fn meets_fraction(count: usize, size: usize, eta: f64) -> bool {
    count as f64 >= eta * size as f64 - 1e-9
}

/// Per proposed cluster: `(target cluster, |C_i ∩ C*_l|)` for every target
/// cluster it intersects, plus the cluster size.
pub(crate) struct Overlaps {
    pub(crate) rows: BTreeMap<ClusterId, (usize, Vec<(ClusterId, usize)>)>,
}

impl Overlaps {
    pub(crate) fn new(proposed: &Clustering, target: &Clustering) -> Self {
        let table = Contingency::new(proposed, target);
        let mut rows: BTreeMap<ClusterId, (usize, Vec<(ClusterId, usize)>)> = proposed
            .clusters()
            .map(|c| (c.id, (c.len(), Vec::new())))
            .collect();
        for (&(p, t), &count) in &table.cells {
            rows.get_mut(&p).expect("row exists").1.push((t, count as usize));
        }
        for (_, row) in rows.values_mut() {
            row.sort_unstable();
        }
        Overlaps { rows }
    }
}

/// Clusters that intersect two or more target clusters.
pub fn feasible_splits(proposed: &Clustering, target: &Clustering) -> Result<Vec<ClusterId>> {
    proposed.check_universe(target)?;
    let overlaps = Overlaps::new(proposed, target);
    Ok(overlaps
        .rows
        .iter()
        .filter(|(_, (_, row))| row.len() >= 2)
        .map(|(&id, _)| id)
        .collect())
}

/// Unordered pairs `(a, b)` with `a < b` that the oracle may ask to merge.
///
/// Eta-based models require one target cluster holding at least an `eta`
/// fraction of each cluster; the unrestricted model requires one target
/// cluster intersecting both.
pub fn feasible_merges(
    proposed: &Clustering,
    target: &Clustering,
    model: Model,
    eta: f64,
) -> Result<Vec<(ClusterId, ClusterId)>> {
    proposed.check_universe(target)?;
    let overlaps = Overlaps::new(proposed, target);
    let mut by_label: BTreeMap<ClusterId, Vec<ClusterId>> = BTreeMap::new();
    for (&id, (size, row)) in &overlaps.rows {
        for &(label, count) in row {
            let qualifies = match model {
                Model::UnrestrictedMerge => count > 0,
                Model::EtaMerge | Model::EtaMergeCc => meets_fraction(count, *size, eta),
            };
            if qualifies {
                by_label.entry(label).or_default().push(id);
            }
        }
    }
    let mut pairs = BTreeSet::new();
    for ids in by_label.values() {
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                pairs.insert((a.min(b), a.max(b)));
            }
        }
    }
    Ok(pairs.into_iter().collect())
}

/// Whether a single request satisfies the model's oracle preconditions.
pub fn is_feasible(
    req: &EditRequest,
    proposed: &Clustering,
    target: &Clustering,
    model: Model,
    eta: f64,
) -> Result<bool> {
    req.validate(proposed)?;
    Ok(match *req {
        EditRequest::Split { cluster } => feasible_splits(proposed, target)?.contains(&cluster),
        EditRequest::Merge { first, second } => {
            let key = (first.min(second), first.max(second));
            feasible_merges(proposed, target, model, eta)?.contains(&key)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w1() -> (Clustering, Clustering) {
        let target = Clustering::from_groups(6, &[vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        let proposed =
            Clustering::from_groups(6, &[vec![0, 1], vec![2, 3], vec![4], vec![5]]).unwrap();
        (proposed, target)
    }

    #[test]
    fn fixed_point_has_no_feasible_edits() {
        let (_, t) = w1();
        assert!(feasible_splits(&t, &t).unwrap().is_empty());
        for m in [Model::EtaMerge, Model::EtaMergeCc, Model::UnrestrictedMerge] {
            assert!(feasible_merges(&t, &t, m, 0.6).unwrap().is_empty());
        }
    }

    #[test]
    fn worked_example_feasibility() {
        let (p, t) = w1();
        assert_eq!(feasible_splits(&p, &t).unwrap(), vec![ClusterId(1)]);
        // {0,1} is wholly in target 0, {2,3} only half: fraction 0.5 < 0.6.
        assert_eq!(
            feasible_merges(&p, &t, Model::EtaMerge, 0.6).unwrap(),
            vec![(ClusterId(2), ClusterId(3))]
        );
        // At eta = 0.5 the half-and-half cluster qualifies for both targets.
        assert_eq!(
            feasible_merges(&p, &t, Model::EtaMerge, 0.5).unwrap(),
            vec![
                (ClusterId(0), ClusterId(1)),
                (ClusterId(1), ClusterId(2)),
                (ClusterId(1), ClusterId(3)),
                (ClusterId(2), ClusterId(3)),
            ]
        );
        assert_eq!(
            feasible_merges(&p, &t, Model::UnrestrictedMerge, 0.99).unwrap().len(),
            4
        );
    }

    #[test]
    fn fraction_slack_handles_rounding() {
        assert!(meets_fraction(7, 10, 0.7));
        assert!(meets_fraction(3, 10, 0.3));
        assert!(!meets_fraction(6, 10, 0.7));
    }

    #[test]
    fn config_validation_and_warnings() {
        assert!(ModelConfig::new(Model::EtaMerge, 0.0, TreeMode::Global).validate().is_err());
        assert!(ModelConfig::new(Model::EtaMerge, 1.1, TreeMode::Global).validate().is_err());
        assert!(ModelConfig::new(Model::EtaMerge, 0.4, TreeMode::Global).warnings().len() == 1);
        assert!(ModelConfig::new(Model::EtaMerge, 0.4, TreeMode::ThresholdGraph)
            .warnings()
            .is_empty());
        assert!(ModelConfig::new(Model::EtaMergeCc, 0.6, TreeMode::Global).warnings().len() == 1);
        assert!(ModelConfig::new(Model::EtaMergeCc, 0.75, TreeMode::Global).warnings().is_empty());
    }

    #[test]
    fn request_validation() {
        let (p, _) = w1();
        assert!(EditRequest::Split { cluster: ClusterId(9) }.validate(&p).is_err());
        let same = EditRequest::Merge {
            first: ClusterId(1),
            second: ClusterId(1),
        };
        assert!(matches!(same.validate(&p), Err(Error::Precondition(_))));
    }
}
