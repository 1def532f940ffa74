//! Interactive clustering by local split and merge edits.
//!
//! A user (or a simulated oracle that knows the target clustering) points at
//! clusters that should be split or merged; the engine answers each request
//! with an edit that only reassigns points of the named clusters. Edits are
//! computed from average-linkage trees (global or local) or, under a single
//! similarity threshold, from a growing neighbour graph.
//!
//! Module map:
//!
//! * [`types`], [`metrics`], [`model`], [`separation`]: clusterings, error
//!   counts, oracle models and data-property checks.
//! * [`linkage`]: average-linkage trees and their split/merge queries.
//! * [`edits`]: the split and merge procedures.
//! * [`oracle`]: feasible-request sampling.
//! * [`datagen`]: planted instances, perturbation, pruning, tf-idf.
//! * [`baselines`]: 2-median and spectral splitters, split evaluation.
//! * [`harness`]: simulation loop, bound audits, sweeps and curve export.
//! * [`io`]: clustering, matrix and run-log file formats.
//! * `service` (feature `service`): HTTP session API.

pub mod baselines;
pub mod datagen;
pub mod edits;
pub mod error;
pub mod harness;
pub mod io;
pub mod linkage;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod separation;
#[cfg(feature = "service")]
pub mod service;
pub mod types;

pub use edits::{apply, EditContext, EditKind, EditResult};
pub use error::{Error, Result};
pub use metrics::{cluster_distance, clustering_distance, error_report, ErrorReport};
pub use model::{feasible_merges, feasible_splits, EditRequest, Model, ModelConfig, TreeMode};
pub use types::{Cluster, ClusterId, Clustering, PointId, Purity, SimilarityMatrix};
