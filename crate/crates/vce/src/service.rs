//! HTTP API.
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/tasks` | [`CreateTask`] |
//! | GET | `/tasks/{id}` | |
//! | POST | `/tasks/{id}/close` | |
//! | GET | `/tasks/{id}/map` | |
//! | POST | `/tasks/{id}/sessions` | [`StartSession`] |
//! | GET | `/sessions/{id}` | |
//! | GET | `/sessions/{id}/view` | |
//! | POST | `/sessions/{id}/move` | `{"target": node}` |
//! | POST | `/sessions/{id}/shots` | `{"heading": degrees}` |
//! | DELETE | `/sessions/{id}/shots/{i}` | |
//! | POST | `/sessions/{id}/submit` | |
//! | POST | `/sessions/{id}/abandon` | |
//!
//! Errors are `{"code": ..., "message": ...}` with status 404 for unknown
//! ids, 409 for actions the current state forbids and 422 for invalid
//! input.

use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use vce_core::engine::SessionView;
use vce_core::world::generate_synthetic_world;
use vce_core::{
    consolidate, EngineError, Heading, MoveOutcome, NodeId, SessionId, SessionState, SubmitOutcome, WorkerId, World,
    WorldParams,
};

use crate::error::VceError;
use crate::geojson;
use crate::store::{SessionInfo, SessionStarted, Store, StoreError, TaskDescriptor, TaskSpec};

pub type SharedStore = Arc<Mutex<Store>>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl ToString) -> Self {
        Self { status, code: code.to_string(), message: message.to_string() }
    }
}

fn engine_status(e: &EngineError) -> StatusCode {
    match e {
        EngineError::UnknownSession(_) | EngineError::NoSuchShot(_) => StatusCode::NOT_FOUND,
        EngineError::ExperimentClosed
        | EngineError::SessionNotActive(..)
        | EngineError::TooManyShots
        | EngineError::WrongShotCount(_)
        | EngineError::WorkerAlreadyParticipated(_)
        | EngineError::DuplicateSession(_)
        | EngineError::ClockWentBackwards { .. } => StatusCode::CONFLICT,
        EngineError::IllegalTarget { .. }
        | EngineError::InvalidConfig(_)
        | EngineError::ReplayDiverged { .. }
        | EngineError::MalformedTranscript(_)
        | EngineError::World(_) => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match &e {
            StoreError::UnknownTask(_) => ApiError::new(StatusCode::NOT_FOUND, "UnknownTask", e),
            StoreError::Engine(inner) => ApiError::new(engine_status(inner), inner.code(), e),
            StoreError::Persist(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Storage", e),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        StoreError::Engine(e).into()
    }
}

impl From<VceError> for ApiError {
    fn from(e: VceError) -> Self {
        match e {
            VceError::World(w) => EngineError::World(w).into(),
            VceError::Geo(g) => EngineError::World(g.into()).into(),
            other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidGeometry", other),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidBody", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, axum::Json(json!({"code": self.code, "message": self.message}))).into_response()
    }
}

/// JSON body whose rejections use the API error shape.
#[derive(Debug, FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
pub struct Json<T>(pub T);

impl<T: Serialize> IntoResponse for Json<T> {
    fn into_response(self) -> Response {
        axum::Json(self.0).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CreateTask {
    #[serde(flatten)]
    pub spec: TaskSpec,
    /// Parameters of a generated world, used when `world_geojson` is absent.
    pub world: Option<WorldParams>,
    /// A full world file.
    pub world_geojson: Option<Value>,
    /// Replaces the world's boundary: a Polygon geometry, Feature or
    /// FeatureCollection.
    pub aoi: Option<Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartSession {
    pub worker_id: WorkerId,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub start_node: Option<NodeId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MoveRequest {
    pub target: NodeId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShotRequest {
    pub heading: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MoveResponse {
    #[serde(flatten)]
    pub outcome: MoveOutcome,
    pub state: SessionState,
    pub view: SessionView,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShotResponse {
    pub index: Option<usize>,
    pub pending_shots: usize,
    pub state: SessionState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitResponse {
    #[serde(flatten)]
    pub outcome: SubmitOutcome,
    pub state: SessionState,
    pub detections: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateResponse {
    pub session_id: SessionId,
    pub state: SessionState,
}

fn build_world(req: &CreateTask) -> Result<World, ApiError> {
    let world = match &req.world_geojson {
        Some(v) => geojson::world_from_geojson(v)?,
        None => generate_synthetic_world(&req.world.clone().unwrap_or_default()).map_err(EngineError::from)?,
    };
    match &req.aoi {
        None => Ok(world),
        Some(v) => {
            let aoi = geojson::aoi_from_geojson(v)?;
            let graph = world.graph().clone();
            let pois = world.pois().to_vec();
            Ok(World::new(graph, aoi, pois).map_err(EngineError::from)?)
        }
    }
}

fn sid(raw: &str) -> Result<SessionId, ApiError> {
    raw.parse()
        .map(SessionId)
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "UnknownSession", format!("unknown session {raw:?}")))
}

fn lock(store: &SharedStore) -> std::sync::MutexGuard<'_, Store> {
    store.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

async fn create_task(State(store): State<SharedStore>, Json(req): Json<CreateTask>) -> Result<Response, ApiError> {
    let world = build_world(&req)?;
    let d = lock(&store).create_task(req.spec, world)?;
    Ok((StatusCode::CREATED, Json(d)).into_response())
}

async fn get_task(State(store): State<SharedStore>, Path(id): Path<String>) -> ApiResult<TaskDescriptor> {
    let mut store = lock(&store);
    store.expire_idle()?;
    Ok(Json(store.task(&id)?))
}

async fn close_task(State(store): State<SharedStore>, Path(id): Path<String>) -> ApiResult<TaskDescriptor> {
    Ok(Json(lock(&store).close_task(&id)?))
}

async fn task_map(State(store): State<SharedStore>, Path(id): Path<String>) -> ApiResult<Value> {
    let store = lock(&store);
    let spec = store.task(&id)?.spec;
    let exp = store.experiment(&id)?;
    let dets: Vec<_> = exp.committed_detections().cloned().collect();
    Ok(Json(geojson::clusters_to_geojson(&consolidate(&dets, &spec.aggregation))))
}

async fn start_session(
    State(store): State<SharedStore>,
    Path(id): Path<String>,
    Json(req): Json<StartSession>,
) -> Result<Response, ApiError> {
    let started: SessionStarted = lock(&store).start_session(&id, req.worker_id, req.seed, req.start_node)?;
    Ok((StatusCode::CREATED, Json(started)).into_response())
}

async fn get_session(State(store): State<SharedStore>, Path(id): Path<String>) -> ApiResult<SessionInfo> {
    Ok(Json(lock(&store).session(sid(&id)?)?))
}

async fn get_view(State(store): State<SharedStore>, Path(id): Path<String>) -> ApiResult<SessionView> {
    Ok(Json(lock(&store).view(sid(&id)?)?))
}

async fn move_to(
    State(store): State<SharedStore>,
    Path(id): Path<String>,
    Json(req): Json<MoveRequest>,
) -> ApiResult<MoveResponse> {
    let mut store = lock(&store);
    let (outcome, state, view) = store.act(sid(&id)?, |exp, sid, now| {
        let outcome = exp.move_to(sid, req.target, now)?;
        let view = exp.view(sid)?;
        Ok((outcome, view.state, view))
    })?;
    Ok(Json(MoveResponse { outcome, state, view }))
}

async fn take_shot(
    State(store): State<SharedStore>,
    Path(id): Path<String>,
    Json(req): Json<ShotRequest>,
) -> ApiResult<ShotResponse> {
    if !req.heading.is_finite() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidHeading", "heading must be finite"));
    }
    let mut store = lock(&store);
    let resp = store.act(sid(&id)?, |exp, sid, now| {
        let index = exp.take_shot(sid, Heading::new(req.heading), now)?;
        let s = exp.session(sid).ok_or(EngineError::UnknownSession(sid))?;
        Ok(ShotResponse { index: Some(index), pending_shots: s.pending_shots.len(), state: s.state })
    })?;
    Ok(Json(resp))
}

async fn discard_shot(
    State(store): State<SharedStore>,
    Path((id, index)): Path<(String, String)>,
) -> ApiResult<ShotResponse> {
    let index: usize = index
        .parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "NoSuchShot", format!("no pending shot {index:?}")))?;
    let mut store = lock(&store);
    let resp = store.act(sid(&id)?, |exp, sid, now| {
        exp.discard_shot(sid, index, now)?;
        let s = exp.session(sid).ok_or(EngineError::UnknownSession(sid))?;
        Ok(ShotResponse { index: None, pending_shots: s.pending_shots.len(), state: s.state })
    })?;
    Ok(Json(resp))
}

async fn submit(State(store): State<SharedStore>, Path(id): Path<String>) -> ApiResult<SubmitResponse> {
    let mut store = lock(&store);
    let resp = store.act(sid(&id)?, |exp, sid, now| {
        let outcome = exp.submit(sid, now)?;
        let s = exp.session(sid).ok_or(EngineError::UnknownSession(sid))?;
        Ok(SubmitResponse { outcome, state: s.state, detections: s.detections.len() })
    })?;
    Ok(Json(resp))
}

async fn abandon(State(store): State<SharedStore>, Path(id): Path<String>) -> ApiResult<StateResponse> {
    let session_id = sid(&id)?;
    lock(&store).act(session_id, |exp, sid, now| exp.abandon(sid, now))?;
    Ok(Json(StateResponse { session_id, state: SessionState::Abandoned }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route")
}

pub fn router(store: SharedStore) -> Router {
    Router::new()
        .route("/tasks", post(create_task))
        .route("/tasks/{id}", get(get_task))
        .route("/tasks/{id}/close", post(close_task))
        .route("/tasks/{id}/map", get(task_map))
        .route("/tasks/{id}/sessions", post(start_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/view", get(get_view))
        .route("/sessions/{id}/move", post(move_to))
        .route("/sessions/{id}/shots", post(take_shot))
        .route("/sessions/{id}/shots/{index}", delete(discard_shot))
        .route("/sessions/{id}/submit", post(submit))
        .route("/sessions/{id}/abandon", post(abandon))
        .fallback(not_found)
        .with_state(store)
}

/// Serves until interrupted.
pub async fn serve(store: Store, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(Mutex::new(store))))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
