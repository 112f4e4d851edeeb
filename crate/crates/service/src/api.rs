use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use teachnet_core::harness::{
    build_study_items, score_session, Condition, ItemView, Response, SessionEvent, SessionMode,
    SessionScore, SessionStatus, Stimulus, StudySession, StudyTask,
};

use crate::checkpoints::Checkpoints;
use crate::error::{ApiError, ServiceError};
use crate::store::SessionStore;

/// Shared state: the session store and read-only checkpoints.
#[derive(Clone, Debug)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    pub checkpoints: Checkpoints,
}

impl AppState {
    /// Opens the storage directory, resuming every logged session.
    pub fn open(storage: &Path, checkpoints: Checkpoints) -> Result<Self, ServiceError> {
        Ok(AppState {
            store: Arc::new(SessionStore::open(storage)?),
            checkpoints,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub task: StudyTask,
    pub condition: Condition,
    #[serde(default)]
    pub mode: SessionMode,
    /// Seeds item generation; random when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub status: SessionStatus,
    pub items: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionStatusView {
    pub session_id: String,
    pub task: StudyTask,
    pub condition: Condition,
    pub mode: SessionMode,
    pub status: SessionStatus,
    pub answered: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseAck {
    pub status: SessionStatus,
    pub answered: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuessBody {
    pub guess: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NextExample {
    pub item: usize,
    /// 1-based position of this example within the item.
    pub step: usize,
    pub example: Stimulus,
}

type ApiResult<T> = Result<T, ApiError>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

fn status_view(s: &StudySession) -> SessionStatusView {
    SessionStatusView {
        session_id: s.id.clone(),
        task: s.task,
        condition: s.condition,
        mode: s.mode,
        status: s.status,
        answered: s.responses.len(),
        total: s.items.len(),
    }
}

fn require_active(s: &StudySession) -> ApiResult<()> {
    match s.status {
        SessionStatus::Active => Ok(()),
        SessionStatus::Complete => Err(ApiError::conflict(format!("session `{}` is complete", s.id))),
    }
}

fn require_interactive(s: &StudySession) -> ApiResult<()> {
    match s.mode {
        SessionMode::Interactive => Ok(()),
        SessionMode::Passive => Err(ApiError::conflict(format!(
            "session `{}` is passive; guesses need an interactive session",
            s.id
        ))),
    }
}

async fn create_session(
    State(app): State<AppState>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let req = body(payload)?;
    if req.mode == SessionMode::Interactive && req.condition != Condition::Teacher {
        return Err(ApiError::bad_request("interactive sessions use the teacher condition"));
    }
    let pair = app.checkpoints.get(req.task);
    let needs_teacher = req.condition == Condition::Teacher;
    if needs_teacher && pair.is_none() {
        return Err(ApiError::missing_checkpoint(format!(
            "no {:?} teacher checkpoint is loaded",
            req.task
        )));
    }
    let mut rng = match req.seed {
        Some(s) => ChaCha8Rng::seed_from_u64(s),
        None => ChaCha8Rng::from_rng(&mut rand::rng()),
    };
    let nets = pair.filter(|_| needs_teacher).map(|p| (&p.teacher, &p.student));
    let items = build_study_items(req.task, req.condition, nets, &mut rng)?;
    let total = items.len();
    let id = uuid::Uuid::new_v4().to_string();
    let event = SessionEvent::Created {
        task: req.task,
        condition: req.condition,
        mode: req.mode,
        items,
    };
    app.store.create(&id, &event)?;
    Ok((
        StatusCode::CREATED,
        Json(Created {
            session_id: id,
            status: SessionStatus::Active,
            items: total,
        }),
    ))
}

async fn session_status(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<SessionStatusView>> {
    let slot = app.store.get(&id)?;
    let slot = slot.lock().await;
    Ok(Json(status_view(&slot.session)))
}

async fn current_item(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<ItemView>> {
    let slot = app.store.get(&id)?;
    let slot = slot.lock().await;
    require_active(&slot.session)?;
    Ok(Json(slot.session.view()?))
}

async fn post_response(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<Response>, JsonRejection>,
) -> ApiResult<Json<ResponseAck>> {
    let slot = app.store.get(&id)?;
    let response = body(payload)?;
    let mut slot = slot.lock().await;
    require_active(&slot.session)?;
    let (item, _) = slot.session.current_item()?;
    slot.record(&SessionEvent::Response { item, response })?;
    let s = &slot.session;
    Ok(Json(ResponseAck {
        status: s.status,
        answered: s.responses.len(),
        total: s.items.len(),
    }))
}

async fn post_guess(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<GuessBody>, JsonRejection>,
) -> ApiResult<Json<ItemView>> {
    let slot = app.store.get(&id)?;
    let GuessBody { guess } = body(payload)?;
    let mut slot = slot.lock().await;
    require_active(&slot.session)?;
    require_interactive(&slot.session)?;
    let (item, _) = slot.session.current_item()?;
    slot.record(&SessionEvent::Guess { item, guess })?;
    Ok(Json(slot.session.view()?))
}

async fn next_example(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<NextExample>> {
    let slot = app.store.get(&id)?;
    let mut slot = slot.lock().await;
    require_active(&slot.session)?;
    require_interactive(&slot.session)?;
    let pair = app
        .checkpoints
        .get(slot.session.task)
        .ok_or_else(|| ApiError::missing_checkpoint("no teacher checkpoint for this task"))?;
    let event = slot.session.next_example_event(&pair.teacher)?;
    slot.record(&event)?;
    let SessionEvent::Example { item, example, .. } = event else {
        return Err(ApiError::internal("teacher step produced no example"));
    };
    Ok(Json(NextExample {
        item,
        step: slot.session.progress.examples.len(),
        example,
    }))
}

async fn result(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<SessionScore>> {
    let slot = app.store.get(&id)?;
    let slot = slot.lock().await;
    if slot.session.status != SessionStatus::Complete {
        let s = &slot.session;
        return Err(ApiError::conflict(format!(
            "session `{}` is not complete ({} of {} items answered)",
            s.id,
            s.responses.len(),
            s.items.len()
        )));
    }
    Ok(Json(score_session(&slot.session)?))
}

async fn health() -> &'static str {
    "ok"
}

async fn fallback() -> ApiError {
    ApiError {
        code: "not_found".into(),
        message: "no such endpoint".into(),
        status: StatusCode::NOT_FOUND.as_u16(),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_status))
        .route("/sessions/{id}/item", get(current_item))
        .route("/sessions/{id}/response", post(post_response))
        .route("/sessions/{id}/guess", post(post_guess))
        .route("/sessions/{id}/next-example", get(next_example))
        .route("/sessions/{id}/result", get(result))
        .fallback(fallback)
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped. `ready`, when
/// given, receives the bound address (useful with port 0).
pub async fn serve(
    addr: &str,
    state: AppState,
    ready: Option<tokio::sync::oneshot::Sender<SocketAddr>>,
) -> Result<(), ServiceError> {
    let bind_err = |source| ServiceError::Bind {
        addr: addr.to_string(),
        source,
    };
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(bind_err)?;
    let local = listener.local_addr().map_err(bind_err)?;
    if let Some(tx) = ready {
        let _ = tx.send(local);
    }
    axum::serve(listener, router(state)).await.map_err(bind_err)
}
