//! Session-scoped HTTP API.
//!
//! Each session owns a workspace and two labelings: `basis`, the last solver
//! output that updates measure stability against, and `shown`, its
//! conflict-free restriction to the current graph. One optimization runs per
//! session at a time; mutations that arrive meanwhile get 503.

use std::collections::{BTreeSet, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex as StdMutex, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

use crate::candgen::TextMetricsConfig;
use crate::edits::{DeltaSummary, Edit, Workspace};
use crate::error::Error;
use crate::io::{self, generate_grid_dataset, Dataset, DatasetFormat, SessionSnapshot};
use crate::model::{validate_labeling, CandidateId, LabelCandidate, Labeling, PositionModel, UpdateParams};
use crate::solvers::{self, Algorithm, Progress, SolverParams};
use crate::update::{self, StabilityReport};

pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn busy() -> Self {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "an optimization is in flight for this session",
        )
    }

    fn unknown_session(id: &str) -> Self {
        let mut e = ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}"));
        e.body["session"] = json!(id);
        e
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownCandidate(_) | Error::UnknownFeature(_) => StatusCode::NOT_FOUND,
            Error::FixationConflict(..) => StatusCode::CONFLICT,
            Error::Io(_) | Error::Csv(_) | Error::InconsistentDelta(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let mut err = ApiError::new(status, e.to_string());
        match e {
            Error::UnknownCandidate(id) => err.body["id"] = json!(id),
            Error::UnknownFeature(f) => err.body["feature"] = json!(f),
            Error::FixationConflict(a, b) => err.body["pair"] = json!([a, b]),
            _ => {}
        }
        err
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// JSON body whose rejections map to 422.
pub struct Payload<T>(pub T);

impl<S, T> FromRequest<S> for Payload<T>
where
    Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> ApiResult<Self> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Payload(v)),
            Err(e) => Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.body_text())),
        }
    }
}

/// JSON body that may be empty, in which case `T::default()` is used.
pub struct OptionalPayload<T>(pub T);

impl<S, T> FromRequest<S> for OptionalPayload<T>
where
    T: DeserializeOwned + Default,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> ApiResult<Self> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
        if bytes.iter().all(u8::is_ascii_whitespace) {
            return Ok(OptionalPayload(T::default()));
        }
        serde_json::from_slice(&bytes)
            .map(OptionalPayload)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum JobStatus {
    Queued {
        operation: String,
    },
    Running {
        operation: String,
        percent: f64,
    },
    Done {
        operation: Option<String>,
        error: Option<String>,
    },
}

struct Session {
    dataset: Dataset,
    workspace: Workspace,
    basis: Labeling,
    shown: Labeling,
    last_report: Option<StabilityReport>,
    /// Set while an optimization owns the session.
    busy: bool,
}

struct Slot {
    data: Mutex<Session>,
    status: StdMutex<(JobStatus, Option<Progress>)>,
}

impl Slot {
    fn set_status(&self, status: JobStatus, progress: Option<Progress>) {
        *self.status.lock().expect("status lock") = (status, progress);
    }
}

#[derive(Default)]
pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    next_id: AtomicU64,
}

impl AppState {
    fn slot(&self, id: &str) -> ApiResult<Arc<Slot>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }
}

#[derive(Clone, Debug, Default)]
pub struct ServeConfig {
    pub bind: Option<SocketAddr>,
    pub static_dir: Option<PathBuf>,
}

pub fn router(static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_info).delete(delete_session))
        .route("/sessions/{id}/solve", post(solve))
        .route("/sessions/{id}/edits", post(edit))
        .route("/sessions/{id}/update", post(update))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/labeling", get(labeling))
        .route("/sessions/{id}/candidates", get(candidates))
        .route("/sessions/{id}/keep-fixed", put(keep_fixed))
        .route("/sessions/{id}/status", get(status))
        .route("/sessions/{id}/snapshot", get(snapshot))
        .with_state(Arc::new(AppState::default()));
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(config: ServeConfig) -> crate::Result<()> {
    let addr = config.bind.unwrap_or_else(|| SocketAddr::from(([127, 0, 0, 1], 8080)));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(listener, config.static_dir).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, static_dir: Option<PathBuf>) -> crate::Result<()> {
    axum::serve(listener, router(static_dir)).await?;
    Ok(())
}

#[derive(Debug, Deserialize)]
pub struct GridParams {
    pub rows: u32,
    pub cols: u32,
    #[serde(default = "default_spacing")]
    pub spacing_px: f64,
    #[serde(default)]
    pub jitter_px: f64,
    #[serde(default = "default_name_length")]
    pub name_length: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_spacing() -> f64 {
    18.0
}

fn default_name_length() -> usize {
    8
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub dataset: Option<Value>,
    #[serde(default)]
    pub format: Option<DatasetFormat>,
    #[serde(default)]
    pub generator: Option<GridParams>,
    #[serde(default)]
    pub snapshot: Option<SessionSnapshot>,
    #[serde(default)]
    pub zoom: Option<u8>,
    #[serde(default)]
    pub model: Option<PositionModel>,
    #[serde(default)]
    pub font_size: Option<f64>,
    #[serde(default)]
    pub metrics: Option<TextMetricsConfig>,
}

#[derive(Serialize)]
struct FeatureView<'a> {
    index: u32,
    id: &'a str,
    name: &'a str,
    anchor: (f64, f64),
    deleted: bool,
    font_size: f64,
    box_visible: bool,
}

fn session_view(id: &str, s: &Session, warnings: &[String]) -> Value {
    let store = s.workspace.store();
    let features: Vec<FeatureView> = (0..store.feature_count() as u32)
        .map(|i| {
            let f = store.feature(i).expect("feature index in range");
            let st = store.feature_state(i).expect("feature index in range");
            FeatureView {
                index: i,
                id: &f.id,
                name: &f.name,
                anchor: store.feature_anchor(i).expect("feature index in range"),
                deleted: st.deleted,
                font_size: st.style.font_size,
                box_visible: st.style.box_visible,
            }
        })
        .collect();
    json!({
        "id": id,
        "dataset": s.dataset.name,
        "zoom": store.zoom(),
        "position_model": store.position_model(),
        "keep_fixed": store.keep_fixed,
        "features": features,
        "candidates": store.candidates().collect::<Vec<_>>(),
        "labeling": s.shown,
        "warnings": warnings,
    })
}

async fn create_session(State(app): State<Arc<AppState>>, Payload(req): Payload<CreateSession>) -> ApiResult<Response> {
    let sources = [req.dataset.is_some(), req.generator.is_some(), req.snapshot.is_some()];
    if sources.iter().filter(|&&b| b).count() != 1 {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "give exactly one of dataset, generator or snapshot",
        ));
    }
    let (session, warnings) = tokio::task::spawn_blocking(move || build_session(req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let id = format!("s{}", app.next_id.fetch_add(1, Ordering::Relaxed) + 1);
    let body = session_view(&id, &session, &warnings);
    let slot = Arc::new(Slot {
        data: Mutex::new(session),
        status: StdMutex::new((
            JobStatus::Done {
                operation: None,
                error: None,
            },
            None,
        )),
    });
    app.sessions.write().expect("session map lock").insert(id, slot);
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

fn build_session(req: CreateSession) -> crate::Result<(Session, Vec<String>)> {
    if let Some(snap) = req.snapshot {
        let name = snap.dataset_name.clone();
        let zoom = snap.zoom;
        let model = snap.position_model;
        let features = snap.features.iter().map(|f| f.point.clone()).collect();
        let (workspace, labeling) = snap.restore()?;
        let dataset = Dataset {
            name,
            features,
            zoom,
            position_model: model,
        };
        return Ok((
            Session {
                dataset,
                workspace,
                basis: labeling.clone(),
                shown: labeling,
                last_report: None,
                busy: false,
            },
            Vec::new(),
        ));
    }
    let (mut dataset, warnings) = if let Some(g) = req.generator {
        let d = generate_grid_dataset(g.rows, g.cols, g.spacing_px, g.jitter_px, g.name_length, g.seed)?;
        (d, Vec::new())
    } else {
        let value = req.dataset.expect("one source is present");
        let format = req.format.unwrap_or(
            if value.get("type").and_then(Value::as_str) == Some("FeatureCollection") {
                DatasetFormat::Geojson
            } else {
                DatasetFormat::SimpleJson
            },
        );
        let loaded = io::parse_dataset(&value.to_string(), format, "dataset")?;
        (loaded.dataset, loaded.warnings)
    };
    if let Some(z) = req.zoom {
        dataset.zoom = z;
    }
    if let Some(m) = req.model {
        dataset.position_model = m;
    }
    let metrics = req.metrics.unwrap_or_default();
    metrics.validate()?;
    let store = dataset.store(req.font_size.unwrap_or(10.0), metrics)?;
    let workspace = Workspace::new(store)?;
    Ok((
        Session {
            dataset,
            workspace,
            basis: Labeling::empty(),
            shown: Labeling::empty(),
            last_report: None,
            busy: false,
        },
        warnings,
    ))
}

async fn session_info(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let slot = app.slot(&id)?;
    let s = slot.data.lock().await;
    Ok(Json(session_view(&id, &s, &[])))
}

async fn delete_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let slot = app.slot(&id)?;
    if slot.data.lock().await.busy {
        return Err(ApiError::busy());
    }
    app.sessions.write().expect("session map lock").remove(&id);
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveRequest {
    pub algorithm: Option<Algorithm>,
    pub seed: Option<u64>,
    pub params: Option<SolverParams>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpdateRequest {
    pub algorithm: Option<Algorithm>,
    pub epsilon: Option<f64>,
    pub strict: Option<bool>,
    pub seed: Option<u64>,
    pub params: Option<SolverParams>,
}

fn solver_params(params: Option<SolverParams>, seed: Option<u64>) -> SolverParams {
    let mut p = params.unwrap_or_default();
    if let Some(s) = seed {
        p.set_seed(s);
    }
    p
}

fn metrics(l: &Labeling, millis: f64, optimal: Option<bool>) -> Value {
    json!({ "labeled": l.len(), "weight": l.total_weight, "millis": millis, "optimal": optimal })
}

/// Marks the session busy, runs `job` on a blocking thread against a
/// snapshot, and commits the result under the lock. The work lives on its own
/// task so a dropped request cannot leave the session busy.
async fn run_job<T, F, C>(slot: Arc<Slot>, operation: &str, job: F, commit: C) -> ApiResult<Json<Value>>
where
    T: Send + 'static,
    F: FnOnce(&Progress) -> crate::Result<T> + Send + 'static,
    C: FnOnce(&mut Session, T, f64) -> Value + Send + 'static,
{
    let progress = Progress::new();
    slot.set_status(
        JobStatus::Queued {
            operation: operation.to_string(),
        },
        None,
    );
    let operation = operation.to_string();
    let task = tokio::spawn(async move {
        let started = Instant::now();
        let worker_slot = slot.clone();
        let op = operation.clone();
        let joined = tokio::task::spawn_blocking(move || {
            worker_slot.set_status(
                JobStatus::Running {
                    operation: op,
                    percent: 0.0,
                },
                Some(progress.clone()),
            );
            job(&progress)
        })
        .await;
        let millis = started.elapsed().as_secs_f64() * 1000.0;
        let mut s = slot.data.lock().await;
        s.busy = false;
        let result = match joined {
            Ok(r) => r.map_err(ApiError::from),
            Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
        };
        let status = JobStatus::Done {
            operation: Some(operation),
            error: result
                .as_ref()
                .err()
                .map(|e| e.body["error"].as_str().unwrap_or_default().to_string()),
        };
        slot.set_status(status, None);
        result.map(|out| commit(&mut s, out, millis))
    });
    match task.await {
        Ok(r) => r.map(Json),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

async fn claim(slot: &Slot) -> ApiResult<tokio::sync::MutexGuard<'_, Session>> {
    let s = slot.data.lock().await;
    if s.busy {
        return Err(ApiError::busy());
    }
    Ok(s)
}

async fn solve(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    OptionalPayload(req): OptionalPayload<SolveRequest>,
) -> ApiResult<Json<Value>> {
    let slot = app.slot(&id)?;
    let algorithm = req.algorithm.unwrap_or(Algorithm::Exact);
    let params = solver_params(req.params, req.seed);
    let graph = {
        let mut s = claim(&slot).await?;
        s.busy = true;
        s.workspace.graph().clone()
    };
    run_job(
        slot,
        "solve",
        move |p| solvers::solve(algorithm, &graph, &BTreeSet::new(), &params, Some(p)),
        |s, out, millis| {
            let m = metrics(&out.labeling, millis, out.optimal);
            s.basis = out.labeling.clone();
            s.shown = out.labeling;
            s.last_report = None;
            json!({ "labeling": s.shown, "metrics": m })
        },
    )
    .await
}

async fn update(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    OptionalPayload(req): OptionalPayload<UpdateRequest>,
) -> ApiResult<Json<Value>> {
    let slot = app.slot(&id)?;
    let algorithm = req.algorithm.unwrap_or(Algorithm::Exact);
    let params = solver_params(req.params, req.seed);
    let up = UpdateParams {
        epsilon: req.epsilon.unwrap_or(1.0),
        strict_mode: req.strict.unwrap_or(false),
    };
    up.validate()?;
    let (graph, previous) = {
        let mut s = claim(&slot).await?;
        s.busy = true;
        (s.workspace.graph().clone(), s.basis.clone())
    };
    run_job(
        slot,
        "update",
        move |p| update::update_labeling(&graph, &previous, algorithm, &up, &params, Some(p)),
        |s, out, millis| {
            let m = metrics(&out.labeling, millis, out.optimal);
            s.basis = out.labeling.clone();
            s.shown = out.labeling;
            s.last_report = Some(out.report);
            json!({ "labeling": s.shown, "report": out.report, "metrics": m })
        },
    )
    .await
}

fn restrict(s: &mut Session) {
    s.shown = update::restrict(s.workspace.graph(), &s.shown);
}

#[derive(Serialize)]
struct EditResponse {
    summary: DeltaSummary,
    changed: Vec<LabelCandidate>,
    undo_depth: usize,
    labeling: Labeling,
}

fn edit_response(s: &Session, summary: DeltaSummary, changed: Vec<CandidateId>) -> EditResponse {
    let store = s.workspace.store();
    EditResponse {
        summary,
        changed: changed
            .into_iter()
            .filter_map(|id| store.candidate(id).cloned())
            .collect(),
        undo_depth: s.workspace.undo_depth(),
        labeling: s.shown.clone(),
    }
}

fn changed_ids(delta: &crate::edits::EditDelta) -> Vec<CandidateId> {
    let mut ids: Vec<CandidateId> = delta
        .candidate_changes
        .iter()
        .filter_map(|c| c.after.as_ref().or(c.before.as_ref()).map(|c| c.id))
        .collect();
    ids.sort();
    ids.dedup();
    ids
}

async fn edit(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Payload(edit): Payload<Edit>,
) -> ApiResult<Json<EditResponse>> {
    let slot = app.slot(&id)?;
    let mut s = claim(&slot).await?;
    let delta = s.workspace.apply_edit(&edit)?;
    restrict(&mut s);
    Ok(Json(edit_response(&s, delta.summary(), changed_ids(&delta))))
}

async fn undo(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let slot = app.slot(&id)?;
    let mut s = claim(&slot).await?;
    match s.workspace.undo()? {
        None => Ok(Json(json!({ "undone": false, "undo_depth": 0 }))),
        Some(inverse) => {
            restrict(&mut s);
            let r = edit_response(&s, inverse.summary(), changed_ids(&inverse));
            let mut v = serde_json::to_value(r).expect("response serializes");
            v["undone"] = json!(true);
            Ok(Json(v))
        }
    }
}

async fn labeling(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let slot = app.slot(&id)?;
    let s = slot.data.lock().await;
    let store = s.workspace.store();
    let labels: Vec<&LabelCandidate> = s.shown.selected.iter().filter_map(|&c| store.candidate(c)).collect();
    debug_assert!(validate_labeling(s.workspace.graph(), &s.shown).is_empty());
    Ok(Json(json!({
        "selected": s.shown.selected,
        "total_weight": s.shown.total_weight,
        "labeled": s.shown.len(),
        "labels": labels,
        "report": s.last_report,
    })))
}

#[derive(Debug, Deserialize)]
pub struct CandidateQuery {
    pub feature: Option<String>,
}

async fn candidates(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<CandidateQuery>,
) -> ApiResult<Json<Vec<LabelCandidate>>> {
    let slot = app.slot(&id)?;
    let s = slot.data.lock().await;
    let store = s.workspace.store();
    let list = match q.feature {
        Some(f) => store.candidates_of(store.feature_index(&f)?).cloned().collect(),
        None => store.candidates().cloned().collect(),
    };
    Ok(Json(list))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum KeepFixed {
    Flag(bool),
    Object { keep_fixed: bool },
}

async fn keep_fixed(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Payload(body): Payload<KeepFixed>,
) -> ApiResult<Json<Value>> {
    let flag = match body {
        KeepFixed::Flag(b) | KeepFixed::Object { keep_fixed: b } => b,
    };
    let slot = app.slot(&id)?;
    let mut s = claim(&slot).await?;
    s.workspace.store_mut().keep_fixed = flag;
    Ok(Json(json!({ "keep_fixed": flag })))
}

async fn status(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<JobStatus>> {
    let slot = app.slot(&id)?;
    let (mut status, progress) = slot.status.lock().expect("status lock").clone();
    if let (JobStatus::Running { percent, .. }, Some(p)) = (&mut status, progress) {
        *percent = p.percent();
    }
    Ok(Json(status))
}

async fn snapshot(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionSnapshot>> {
    let slot = app.slot(&id)?;
    let s = slot.data.lock().await;
    Ok(Json(SessionSnapshot::capture(&s.dataset.name, &s.workspace, &s.shown)))
}
