//! HTTP session API for a human (or scripted) oracle.
//!
//! Artifacts (matrices, clusterings) are uploaded first and referenced by id
//! when a session is created. With a data directory, artifacts are stored as
//! files and every session keeps an append-only JSON-lines log; opening the
//! same directory again replays the logs.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::edits::{apply, build_global_tree, EditContext, EditResult};
use crate::error::Error;
use crate::io::{parse_matrix, read_clustering, write_clustering, write_matrix_binary};
use crate::linkage::LinkageTree;
use crate::metrics::{error_report, ErrorReport};
use crate::model::{EditRequest, ModelConfig, ModelWarning};
use crate::types::{ClusterId, Clustering, PointId, Purity, SimilarityMatrix};

pub const PAGE_SIZE: usize = 50;
pub const REPRESENTATIVES: usize = 5;

/// JSON error body.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(skip)]
    pub status: u16,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { code: code.to_string(), message: message.into(), status: status.as_u16() }
    }

    fn not_found(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, code, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::SplitInfeasible(_) => (StatusCode::CONFLICT, "split_infeasible"),
            Error::UnknownCluster(_) => (StatusCode::NOT_FOUND, "unknown_cluster"),
            Error::UnknownPoint(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_point"),
            Error::Precondition(_) => (StatusCode::UNPROCESSABLE_ENTITY, "precondition"),
            Error::Domain(_) => (StatusCode::UNPROCESSABLE_ENTITY, "domain"),
            Error::SizeCap { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "size_cap"),
            Error::Parse { .. } | Error::Json(_) => (StatusCode::BAD_REQUEST, "parse"),
            Error::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub matrix: String,
    pub initial: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub config: ModelConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactCreated {
    pub id: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
    pub warnings: Vec<ModelWarning>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub n: usize,
    pub clusters: usize,
    pub edits: usize,
    pub config: ModelConfig,
    pub has_target: bool,
    pub warnings: Vec<ModelWarning>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: ClusterId,
    pub size: usize,
    pub purity: Purity,
    pub representatives: Vec<PointId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterPage {
    pub page: usize,
    pub pages: usize,
    pub total: usize,
    pub clusters: Vec<ClusterSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditResponse {
    pub seq: usize,
    pub result: EditResult,
    pub added: Vec<ClusterSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub current: ErrorReport,
    /// Errors after creation and after every edit.
    pub history: Vec<ErrorReport>,
}

/// One line of a session log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    Created { session: String, create: CreateSession },
    Edit { seq: usize, request: EditRequest, result: EditResult },
}

#[derive(Deserialize)]
struct PageQuery {
    #[serde(default)]
    page: usize,
}

/// Points of `members` ordered by decreasing sum of similarities to the
/// other members (smaller id first on ties), truncated to `count`.
pub fn representatives(s: &SimilarityMatrix, members: &[PointId], count: usize) -> Vec<PointId> {
    let mut scored: Vec<(f64, PointId)> = members
        .iter()
        .map(|&p| (s.sum_to(p, members) - s.get(p, p), p))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(count).map(|(_, p)| p).collect()
}

struct Session {
    create: CreateSession,
    s: Arc<SimilarityMatrix>,
    tree: Option<LinkageTree>,
    clustering: Clustering,
    target: Option<Arc<Clustering>>,
    history: Vec<ErrorReport>,
    log: Vec<LogEntry>,
    file: Option<File>,
}

impl Session {
    fn summary(&self, id: ClusterId) -> ApiResult<ClusterSummary> {
        let c = self.clustering.get(id)?;
        Ok(ClusterSummary {
            id,
            size: c.len(),
            purity: c.purity,
            representatives: representatives(&self.s, c.members(), REPRESENTATIVES),
        })
    }

    fn edits(&self) -> usize {
        self.log.len() - 1
    }

    fn append(&mut self, entry: LogEntry) -> ApiResult<()> {
        if let Some(f) = self.file.as_mut() {
            let mut line = serde_json::to_vec(&entry).map_err(Error::from)?;
            line.push(b'\n');
            f.write_all(&line).and_then(|()| f.flush()).map_err(Error::from)?;
        }
        self.log.push(entry);
        Ok(())
    }

    /// Applies a request and returns its result; the log is not touched.
    fn apply(&mut self, request: &EditRequest) -> ApiResult<EditResult> {
        let ctx = EditContext { s: &self.s, tree: self.tree.as_ref() };
        let result = apply(&mut self.clustering, request, &self.create.config, ctx)?;
        if let Some(t) = &self.target {
            self.history.push(error_report(&self.clustering, t)?);
        }
        Ok(result)
    }
}

#[derive(Default)]
struct Inner {
    dir: Option<PathBuf>,
    matrices: RwLock<HashMap<String, Arc<SimilarityMatrix>>>,
    clusterings: RwLock<HashMap<String, Arc<Clustering>>>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
    counter: std::sync::atomic::AtomicU64,
}

/// Shared service state; cheap to clone.
#[derive(Clone, Default)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// State kept in memory only.
    pub fn in_memory() -> Self {
        AppState::default()
    }

    /// State persisted under `dir`; existing artifacts are loaded and
    /// session logs replayed.
    pub fn open(dir: impl AsRef<Path>) -> crate::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        for sub in ["matrices", "clusterings", "sessions"] {
            fs::create_dir_all(dir.join(sub))?;
        }
        let state = AppState(Arc::new(Inner { dir: Some(dir.clone()), ..Inner::default() }));
        let mut max_seq = 0;
        for (sub, is_matrix) in [("matrices", true), ("clusterings", false)] {
            for entry in sorted_entries(&dir.join(sub))? {
                let id = file_stem(&entry);
                max_seq = max_seq.max(id_number(&id));
                let bytes = fs::read(&entry)?;
                if is_matrix {
                    state.0.matrices.write().expect("lock").insert(id, Arc::new(parse_matrix(&bytes)?));
                } else {
                    state.0.clusterings.write().expect("lock").insert(id, Arc::new(read_clustering(bytes.as_slice())?));
                }
            }
        }
        for entry in sorted_entries(&dir.join("sessions"))? {
            let id = file_stem(&entry);
            max_seq = max_seq.max(id_number(&id));
            let session = state.replay(&entry).map_err(|e| Error::domain(format!("replaying {id}: {}", e.message)))?;
            state.0.sessions.write().expect("lock").insert(id, Arc::new(Mutex::new(session)));
        }
        state.0.counter.store(max_seq, std::sync::atomic::Ordering::SeqCst);
        Ok(state)
    }

    fn next_id(&self, prefix: &str) -> String {
        let n = self.0.counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
        format!("{prefix}{n}")
    }

    fn matrix(&self, id: &str) -> ApiResult<Arc<SimilarityMatrix>> {
        self.0.matrices.read().expect("lock").get(id).cloned().ok_or_else(|| ApiError::not_found("unknown_artifact", format!("no matrix {id}")))
    }

    fn clustering(&self, id: &str) -> ApiResult<Arc<Clustering>> {
        self.0
            .clusterings
            .read()
            .expect("lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("unknown_artifact", format!("no clustering {id}")))
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        self.0.sessions.read().expect("lock").get(id).cloned().ok_or_else(|| ApiError::not_found("unknown_session", format!("no session {id}")))
    }

    fn build(&self, create: CreateSession) -> ApiResult<Session> {
        let s = self.matrix(&create.matrix)?;
        let initial = self.clustering(&create.initial)?;
        let target = create.target.as_deref().map(|t| self.clustering(t)).transpose()?;
        create.config.validate()?;
        if initial.n() != s.n() {
            return Err(Error::domain(format!("matrix has {} points, initial clustering {}", s.n(), initial.n())).into());
        }
        let mut history = Vec::new();
        if let Some(t) = &target {
            initial.check_universe(t)?;
            history.push(error_report(&initial, t)?);
        }
        let tree = build_global_tree(&s, &create.config)?;
        Ok(Session {
            clustering: (*initial).clone(),
            create,
            s,
            tree,
            target,
            history,
            log: Vec::new(),
            file: None,
        })
    }

    fn replay(&self, path: &Path) -> ApiResult<Session> {
        let reader = BufReader::new(File::open(path).map_err(Error::from)?);
        let mut session: Option<Session> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(Error::from)?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: LogEntry = serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            match (&entry, session.as_mut()) {
                (LogEntry::Created { create, .. }, None) => session = Some(self.build(create.clone())?),
                (LogEntry::Edit { request, result, .. }, Some(s)) => {
                    if &s.apply(request)? != result {
                        return Err(Error::domain(format!("log line {} replays differently", i + 1)).into());
                    }
                }
                _ => return Err(Error::parse(i + 1, "log entries out of order").into()),
            }
            session.as_mut().expect("created").log.push(entry);
        }
        let mut session = session.ok_or_else(|| Error::parse(0, "empty session log"))?;
        session.file = Some(OpenOptions::new().append(true).open(path).map_err(Error::from)?);
        Ok(session)
    }

    fn store(&self, sub: &str, id: &str, bytes: &[u8]) -> ApiResult<()> {
        if let Some(dir) = &self.0.dir {
            fs::write(dir.join(sub).join(id), bytes).map_err(Error::from)?;
        }
        Ok(())
    }
}

fn sorted_entries(dir: &Path) -> crate::Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    out.sort_by_key(|p| (id_number(&file_stem(p)), p.clone()));
    Ok(out)
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn id_number(id: &str) -> u64 {
    id.trim_start_matches(|c: char| !c.is_ascii_digit()).parse().unwrap_or(0)
}

async fn upload_matrix(State(st): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<ArtifactCreated>)> {
    let s = parse_matrix(&body)?;
    let id = st.next_id("m");
    let mut canonical = Vec::new();
    write_matrix_binary(&s, &mut canonical)?;
    st.store("matrices", &id, &canonical)?;
    let n = s.n();
    st.0.matrices.write().expect("lock").insert(id.clone(), Arc::new(s));
    Ok((StatusCode::CREATED, Json(ArtifactCreated { id, n, clusters: None })))
}

async fn upload_clustering(State(st): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<ArtifactCreated>)> {
    let c = read_clustering(body.as_ref())?;
    let id = st.next_id("c");
    let mut canonical = Vec::new();
    write_clustering(&c, &mut canonical)?;
    st.store("clusterings", &id, &canonical)?;
    let (n, clusters) = (c.n(), c.len());
    st.0.clusterings.write().expect("lock").insert(id.clone(), Arc::new(c));
    Ok((StatusCode::CREATED, Json(ArtifactCreated { id, n, clusters: Some(clusters) })))
}

async fn create_session(State(st): State<AppState>, Json(create): Json<CreateSession>) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let mut session = st.build(create.clone())?;
    let id = st.next_id("s");
    if let Some(dir) = &st.0.dir {
        let path = dir.join("sessions").join(format!("{id}.jsonl"));
        session.file = Some(File::create(path).map_err(Error::from)?);
    }
    session.append(LogEntry::Created { session: id.clone(), create })?;
    let warnings = session.create.config.warnings();
    st.0.sessions.write().expect("lock").insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(SessionCreated { id, warnings })))
}

async fn get_session(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionInfo>> {
    let session = st.session(&id)?;
    let s = session.lock().await;
    Ok(Json(SessionInfo {
        id,
        n: s.clustering.n(),
        clusters: s.clustering.len(),
        edits: s.edits(),
        config: s.create.config,
        has_target: s.target.is_some(),
        warnings: s.create.config.warnings(),
    }))
}

async fn get_clusters(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<PageQuery>,
) -> ApiResult<Json<ClusterPage>> {
    let session = st.session(&id)?;
    let s = session.lock().await;
    let ids: Vec<ClusterId> = s.clustering.ids().collect();
    let pages = ids.len().div_ceil(PAGE_SIZE);
    let clusters = ids
        .iter()
        .skip(q.page * PAGE_SIZE)
        .take(PAGE_SIZE)
        .map(|&c| s.summary(c))
        .collect::<ApiResult<Vec<_>>>()?;
    Ok(Json(ClusterPage { page: q.page, pages, total: ids.len(), clusters }))
}

async fn submit_edit(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(request): Json<EditRequest>,
) -> ApiResult<Json<EditResponse>> {
    let session = st.session(&id)?;
    let mut s = session.lock().await;
    request.validate(&s.clustering)?;
    let result = s.apply(&request)?;
    let seq = s.edits() + 1;
    s.append(LogEntry::Edit { seq, request, result: result.clone() })?;
    let added = result.added.iter().map(|c| s.summary(c.id)).collect::<ApiResult<Vec<_>>>()?;
    let errors = s.history.last().copied().filter(|_| s.target.is_some());
    Ok(Json(EditResponse { seq, result, added, errors }))
}

async fn get_metrics(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Metrics>> {
    let session = st.session(&id)?;
    let s = session.lock().await;
    if s.target.is_none() {
        return Err(ApiError::new(StatusCode::CONFLICT, "target_unknown", "session has no target clustering"));
    }
    let current = *s.history.last().expect("history starts at creation");
    Ok(Json(Metrics { current, history: s.history.clone() }))
}

async fn get_log(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Vec<LogEntry>>> {
    let session = st.session(&id)?;
    let s = session.lock().await;
    Ok(Json(s.log.clone()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/artifacts/matrix", post(upload_matrix))
        .route("/artifacts/clustering", post(upload_clustering))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/clusters", get(get_clusters))
        .route("/sessions/{id}/edits", post(submit_edit))
        .route("/sessions/{id}/metrics", get(get_metrics))
        .route("/sessions/{id}/log", get(get_log))
        .with_state(state)
}

/// Serves the API on `addr` until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
