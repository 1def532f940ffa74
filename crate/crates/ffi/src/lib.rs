//! C ABI for the interclust engine.
//!
//! Objects are opaque handles created by `ic_*_new`/`ic_*_load` functions and
//! released with the matching `ic_*_free`. Every fallible function returns an
//! [`IcStatus`]; on failure, [`ic_last_error`] returns a message for the
//! calling thread. Handles are not thread-safe; use one per thread or lock.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use interclust::edits::{apply, build_global_tree, EditContext, EditKind, EditResult};
use interclust::harness::{run_session, RunConfig};
use interclust::io::{load_clustering, load_matrix, save_clustering};
use interclust::linkage::LinkageTree;
use interclust::metrics::error_report;
use interclust::model::{EditRequest, Model, ModelConfig, TreeMode, DEFAULT_MIN_BLOB};
use interclust::types::{ClusterId, Clustering, SimilarityMatrix};
use interclust::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IcStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Precondition = 3,
    SplitInfeasible = 4,
    UnknownCluster = 5,
    UnknownPoint = 6,
    SizeCap = 7,
    Parse = 8,
    Io = 9,
    InvalidArgument = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IcModel {
    EtaMerge = 0,
    EtaMergeCc = 1,
    UnrestrictedMerge = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IcTreeMode {
    Global = 0,
    Local = 1,
    ThresholdGraph = 2,
    RobustGlobal = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IcEditKind {
    SplitApplied = 0,
    MergeCombined = 1,
    MergeCarvedPure = 2,
    MergeResplit = 3,
    CcMergeMoved = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcModelConfig {
    pub model: IcModel,
    pub eta: f64,
    pub tree_mode: IcTreeMode,
    /// Minimum blob size for the robust tree; 0 selects the default.
    pub min_blob: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IcErrorReport {
    pub delta_u: u64,
    pub delta_o: u64,
    pub delta: u64,
    pub delta_cco: u64,
    pub delta_ccu: u64,
    pub delta_cc: u64,
}

/// Outcome of one edit; the added cluster ids are read with
/// [`ic_session_last_added`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IcEditSummary {
    pub kind: IcEditKind,
    pub removed: usize,
    pub added: usize,
    pub touched_points: usize,
    pub root_fallback: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IcRunSummary {
    pub converged: bool,
    pub iterations: usize,
    pub splits: usize,
    pub merges: usize,
    pub initial_errors: IcErrorReport,
    pub final_errors: IcErrorReport,
    /// Number of non-audit bound checks that failed.
    pub failed_bound_checks: usize,
}

pub struct IcMatrix(SimilarityMatrix);

pub struct IcClustering(Clustering);

pub struct IcSession {
    s: SimilarityMatrix,
    tree: Option<LinkageTree>,
    cfg: ModelConfig,
    clustering: Clustering,
    last: Option<EditResult>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> IcStatus {
    match e {
        Error::Domain(_) => IcStatus::Domain,
        Error::Precondition(_) => IcStatus::Precondition,
        Error::SplitInfeasible(_) => IcStatus::SplitInfeasible,
        Error::UnknownCluster(_) => IcStatus::UnknownCluster,
        Error::UnknownPoint(_) => IcStatus::UnknownPoint,
        Error::SizeCap { .. } => IcStatus::SizeCap,
        Error::Parse { .. } | Error::Json(_) => IcStatus::Parse,
        Error::Io(_) => IcStatus::Io,
    }
}

struct Fail(IcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(IcStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            IcStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            IcStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(IcStatus::InvalidArgument, "path is not UTF-8".into()))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = value;
    Ok(())
}

fn report(r: interclust::ErrorReport) -> IcErrorReport {
    IcErrorReport {
        delta_u: r.delta_u,
        delta_o: r.delta_o,
        delta: r.delta,
        delta_cco: r.delta_cco,
        delta_ccu: r.delta_ccu,
        delta_cc: r.delta_cc,
    }
}

fn model_config(c: &IcModelConfig) -> ModelConfig {
    let model = match c.model {
        IcModel::EtaMerge => Model::EtaMerge,
        IcModel::EtaMergeCc => Model::EtaMergeCc,
        IcModel::UnrestrictedMerge => Model::UnrestrictedMerge,
    };
    let tree = match c.tree_mode {
        IcTreeMode::Global => TreeMode::Global,
        IcTreeMode::Local => TreeMode::Local,
        IcTreeMode::ThresholdGraph => TreeMode::ThresholdGraph,
        IcTreeMode::RobustGlobal => TreeMode::RobustGlobal,
    };
    let mut cfg = ModelConfig::new(model, c.eta, tree);
    cfg.min_blob = if c.min_blob == 0 { DEFAULT_MIN_BLOB } else { c.min_blob };
    cfg
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on this thread.
#[no_mangle]
pub extern "C" fn ic_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ic_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Matrix from `n * n` row-major values (symmetric, in [0, 1]).
///
/// # Safety
/// `values` must point to `n * n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ic_matrix_new(n: usize, values: *const f64, out: *mut *mut IcMatrix) -> IcStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let len = n.checked_mul(n).ok_or_else(|| Fail(IcStatus::InvalidArgument, "n * n overflows".into()))?;
        let v = std::slice::from_raw_parts(values, len).to_vec();
        put(out, IcMatrix(SimilarityMatrix::from_dense(n, v)?))
    })
}

/// Loads a binary or CSV matrix file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ic_matrix_load(path_: *const c_char, out: *mut *mut IcMatrix) -> IcStatus {
    guard(|| put(out, IcMatrix(load_matrix(path(path_)?)?)))
}

/// # Safety
/// `m` must be a live matrix handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ic_matrix_size(m: *const IcMatrix, out: *mut usize) -> IcStatus {
    guard(|| write(out, borrow(m, "matrix")?.0.n()))
}

/// # Safety
/// `m` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ic_matrix_free(m: *mut IcMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Clustering where point `p` belongs to cluster `labels[p]`.
///
/// # Safety
/// `labels` must point to `n` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ic_clustering_new(n: usize, labels: *const u64, out: *mut *mut IcClustering) -> IcStatus {
    guard(|| {
        if labels.is_null() {
            return Err(null("labels"));
        }
        put(out, IcClustering(Clustering::from_labels(std::slice::from_raw_parts(labels, n))))
    })
}

/// Loads a `point<TAB>cluster` text file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ic_clustering_load(path_: *const c_char, out: *mut *mut IcClustering) -> IcStatus {
    guard(|| put(out, IcClustering(load_clustering(path(path_)?)?)))
}

/// # Safety
/// `c` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ic_clustering_save(c: *const IcClustering, path_: *const c_char) -> IcStatus {
    guard(|| Ok(save_clustering(&borrow(c, "clustering")?.0, path(path_)?)?))
}

/// Number of points and of clusters.
///
/// # Safety
/// `c` must be a live handle; `points` and `clusters` writable.
#[no_mangle]
pub unsafe extern "C" fn ic_clustering_shape(c: *const IcClustering, points: *mut usize, clusters: *mut usize) -> IcStatus {
    guard(|| {
        let c = &borrow(c, "clustering")?.0;
        write(points, c.n())?;
        write(clusters, c.len())
    })
}

/// Writes the cluster id of every point into `labels` (length `n`).
///
/// # Safety
/// `c` must be a live handle; `labels` must have room for `n` values.
#[no_mangle]
pub unsafe extern "C" fn ic_clustering_labels(c: *const IcClustering, labels: *mut u64, n: usize) -> IcStatus {
    guard(|| {
        let c = &borrow(c, "clustering")?.0;
        if labels.is_null() {
            return Err(null("labels"));
        }
        if n != c.n() {
            return Err(Fail(IcStatus::InvalidArgument, format!("buffer holds {n} labels, clustering has {}", c.n())));
        }
        let out = std::slice::from_raw_parts_mut(labels, n);
        for (o, id) in out.iter_mut().zip(c.assignment()) {
            *o = id.0;
        }
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ic_clustering_free(c: *mut IcClustering) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Errors of `proposed` against `target`.
///
/// # Safety
/// Both handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ic_error_report(proposed: *const IcClustering, target: *const IcClustering, out: *mut IcErrorReport) -> IcStatus {
    guard(|| write(out, report(error_report(&borrow(proposed, "proposed")?.0, &borrow(target, "target")?.0)?)))
}

/// Starts an editing session over copies of `matrix` and `initial`; the
/// global tree is built here when the configuration needs one.
///
/// # Safety
/// Handles and `cfg` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ic_session_new(
    matrix: *const IcMatrix,
    initial: *const IcClustering,
    cfg: *const IcModelConfig,
    out: *mut *mut IcSession,
) -> IcStatus {
    guard(|| {
        let s = borrow(matrix, "matrix")?.0.clone();
        let clustering = borrow(initial, "initial")?.0.clone();
        let cfg = model_config(borrow(cfg, "cfg")?);
        cfg.validate()?;
        if s.n() != clustering.n() {
            return Err(Error::Domain(format!("matrix has {} points, clustering {}", s.n(), clustering.n())).into());
        }
        let tree = build_global_tree(&s, &cfg)?;
        put(out, IcSession { s, tree, cfg, clustering, last: None })
    })
}

unsafe fn edit(session: *mut IcSession, req: EditRequest, out: *mut IcEditSummary) -> IcStatus {
    guard(|| {
        let sess = borrow_mut(session, "session")?;
        let ctx = EditContext { s: &sess.s, tree: sess.tree.as_ref() };
        let r = apply(&mut sess.clustering, &req, &sess.cfg, ctx)?;
        let kind = match r.kind {
            EditKind::SplitApplied => IcEditKind::SplitApplied,
            EditKind::MergeCombined => IcEditKind::MergeCombined,
            EditKind::MergeCarvedPure => IcEditKind::MergeCarvedPure,
            EditKind::MergeResplit => IcEditKind::MergeResplit,
            EditKind::CcMergeMoved => IcEditKind::CcMergeMoved,
        };
        let summary = IcEditSummary {
            kind,
            removed: r.removed.len(),
            added: r.added.len(),
            touched_points: r.touched_points.len(),
            root_fallback: r.root_fallback,
        };
        sess.last = Some(r);
        if !out.is_null() {
            *out = summary;
        }
        Ok(())
    })
}

/// Splits cluster `cluster`. `out` may be null.
///
/// # Safety
/// `session` must be a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ic_session_split(session: *mut IcSession, cluster: u64, out: *mut IcEditSummary) -> IcStatus {
    edit(session, EditRequest::Split { cluster: ClusterId(cluster) }, out)
}

/// Merges clusters `first` and `second`. `out` may be null.
///
/// # Safety
/// `session` must be a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ic_session_merge(session: *mut IcSession, first: u64, second: u64, out: *mut IcEditSummary) -> IcStatus {
    edit(session, EditRequest::Merge { first: ClusterId(first), second: ClusterId(second) }, out)
}

/// Copies the ids of the clusters added by the last edit into `ids`
/// (capacity `cap`) and their count into `len`.
///
/// # Safety
/// `session` must be live; `ids` must have room for `cap` values; `len` writable.
#[no_mangle]
pub unsafe extern "C" fn ic_session_last_added(session: *const IcSession, ids: *mut u64, cap: usize, len: *mut usize) -> IcStatus {
    guard(|| {
        let sess = borrow(session, "session")?;
        let added: Vec<u64> = sess.last.as_ref().map_or(Vec::new(), |r| r.added.iter().map(|c| c.id.0).collect());
        write(len, added.len())?;
        if added.len() > cap {
            return Err(Fail(IcStatus::InvalidArgument, format!("need room for {} ids", added.len())));
        }
        if !added.is_empty() {
            if ids.is_null() {
                return Err(null("ids"));
            }
            std::slice::from_raw_parts_mut(ids, added.len()).copy_from_slice(&added);
        }
        Ok(())
    })
}

/// Snapshot of the session's current clustering as a new handle.
///
/// # Safety
/// `session` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ic_session_clustering(session: *const IcSession, out: *mut *mut IcClustering) -> IcStatus {
    guard(|| put(out, IcClustering(borrow(session, "session")?.clustering.clone())))
}

/// # Safety
/// `s` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ic_session_free(s: *mut IcSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Runs the simulated oracle from `initial` towards `target` for at most
/// `cap` edits.
///
/// # Safety
/// Handles and `cfg` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ic_simulate(
    matrix: *const IcMatrix,
    target: *const IcClustering,
    initial: *const IcClustering,
    cfg: *const IcModelConfig,
    seed: u64,
    cap: usize,
    out: *mut IcRunSummary,
) -> IcStatus {
    guard(|| {
        let mut rc = RunConfig::new(model_config(borrow(cfg, "cfg")?));
        rc.cap = cap;
        let r = run_session(&borrow(matrix, "matrix")?.0, &borrow(target, "target")?.0, &borrow(initial, "initial")?.0, &rc, seed)?;
        write(
            out,
            IcRunSummary {
                converged: r.termination.is_converged(),
                iterations: r.steps.len(),
                splits: r.splits(),
                merges: r.merges(),
                initial_errors: report(r.initial),
                final_errors: report(*r.curve().last().expect("curve starts with the initial report")),
                failed_bound_checks: r.bound_checks.iter().filter(|b| !b.ok && !b.audit).count(),
            },
        )
    })
}
