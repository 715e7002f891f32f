//! HTTP+JSON front end of the rating study.
//!
//! | method | path | who |
//! |---|---|---|
//! | `POST` | `/sessions` | admin |
//! | `GET` | `/sessions/{id}/next` | rater |
//! | `POST` | `/sessions/{id}/scores` | rater |
//! | `POST` | `/sessions/{id}/close` | admin |
//! | `GET` | `/report` | admin |
//! | `GET` | `/renders/{session}/{item}/{view}` | rater |
//!
//! Admin routes require `Authorization: Bearer <token>`. Rater-facing bodies
//! are built from the dedicated view types below, none of which carries the
//! item source, the case id or a rendering file name.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TuringError};
use crate::session::{create_sessions, CasePool, VIEWS_PER_ITEM};
use crate::store::Store;
use crate::turing_report;

pub const DEFAULT_RUBRIC: &str = "Completeness: how much of the visible lesion is covered by the \
outline (1 = almost none, 6 = all of it). Correctness: how well the outline follows the lesion \
border (1 = very poorly, 6 = perfectly).";

/// View names, in the order renderings are stored for each item.
pub const VIEW_NAMES: [&str; VIEWS_PER_ITEM] = ["axial-1", "axial-2", "sagittal"];

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    pub pool_path: PathBuf,
    pub admin_token: String,
    pub rubric: String,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: Store,
    pool: CasePool,
    admin_token: String,
    rubric: String,
}

impl AppState {
    pub fn new(store: Store, pool: CasePool, admin_token: impl Into<String>, rubric: impl Into<String>) -> Self {
        AppState {
            inner: Arc::new(Inner {
                store,
                pool,
                admin_token: admin_token.into(),
                rubric: rubric.into(),
            }),
        }
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub scored: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemView {
    pub item_id: String,
    /// Two axial renderings, then one sagittal.
    pub renders: Vec<String>,
}

/// Body of `GET /sessions/{id}/next`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextResponse {
    pub session_id: String,
    pub progress: Progress,
    pub complete: bool,
    pub closed: bool,
    pub item: Option<ItemView>,
    pub rubric: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScoreRequest {
    pub item_id: String,
    pub completeness: i64,
    pub correctness: i64,
}

/// Body of a successful `POST /sessions/{id}/scores`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub item_id: String,
    pub overwritten: bool,
    pub progress: Progress,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateSessionsRequest {
    pub raters: Vec<String>,
    pub seed: u64,
    #[serde(default = "default_min")]
    pub min_items: usize,
    #[serde(default = "default_max")]
    pub max_items: usize,
}

fn default_min() -> usize {
    *crate::session::DEFAULT_ITEMS_PER_RATER.start()
}

fn default_max() -> usize {
    *crate::session::DEFAULT_ITEMS_PER_RATER.end()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub rater_id: String,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSessionsResponse {
    pub sessions: Vec<CreatedSession>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

impl TuringError {
    fn status(&self) -> StatusCode {
        match self {
            TuringError::UnknownSession(_) | TuringError::UnknownItem(_) => StatusCode::NOT_FOUND,
            TuringError::ClosedSession(_)
            | TuringError::DuplicateSession(_)
            | TuringError::NoCompletedSessions
            | TuringError::InsufficientPool { .. } => StatusCode::CONFLICT,
            TuringError::OutOfRangeScore(_) | TuringError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            TuringError::Unauthorized => StatusCode::UNAUTHORIZED,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for TuringError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

fn require_admin(state: &AppState, headers: &HeaderMap) -> Result<()> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    match token {
        Some(t) if !state.inner.admin_token.is_empty() && t == state.inner.admin_token => Ok(()),
        _ => Err(TuringError::Unauthorized),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| TuringError::InvalidRequest(format!("worker failed: {e}")))?
}

async fn create(
    State(state): State<AppState>,
    headers: HeaderMap,
    Json(req): Json<CreateSessionsRequest>,
) -> Result<(StatusCode, Json<CreateSessionsResponse>)> {
    require_admin(&state, &headers)?;
    if req.raters.is_empty() {
        return Err(TuringError::InvalidRequest("no raters".into()));
    }
    let sessions = create_sessions(&state.inner.pool, &req.raters, req.min_items..=req.max_items, req.seed)?;
    let body = CreateSessionsResponse {
        sessions: sessions
            .iter()
            .map(|s| CreatedSession {
                session_id: s.session_id.clone(),
                rater_id: s.rater_id.clone(),
                total: s.items.len(),
            })
            .collect(),
    };
    let st = state.clone();
    blocking(move || st.store().add_sessions(sessions)).await?;
    Ok((StatusCode::CREATED, Json(body)))
}

fn render_url(session_id: &str, item_id: &str, view: &str) -> String {
    format!("/renders/{session_id}/{item_id}/{view}")
}

async fn next(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<NextResponse>> {
    let snapshot = state.store().state();
    let session = snapshot.session(&id)?;
    let item = if session.closed {
        None
    } else {
        session.next_unscored().map(|item| ItemView {
            item_id: item.item_id.clone(),
            renders: VIEW_NAMES
                .iter()
                .map(|v| render_url(&session.session_id, &item.item_id, v))
                .collect(),
        })
    };
    Ok(Json(NextResponse {
        session_id: session.session_id.clone(),
        progress: Progress {
            scored: session.scored(),
            total: session.items.len(),
        },
        complete: session.is_complete(),
        closed: session.closed,
        item,
        rubric: state.inner.rubric.clone(),
    }))
}

async fn score(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ScoreRequest>,
) -> Result<Json<ScoreResponse>> {
    let st = state.clone();
    let item_id = req.item_id.clone();
    let ack = blocking(move || {
        st.store()
            .submit_score(&id, &req.item_id, req.completeness, req.correctness)
    })
    .await?;
    Ok(Json(ScoreResponse {
        item_id,
        overwritten: ack.overwritten,
        progress: Progress {
            scored: ack.scored,
            total: ack.total,
        },
    }))
}

async fn close(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> Result<StatusCode> {
    require_admin(&state, &headers)?;
    let st = state.clone();
    blocking(move || st.store().close_session(&id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn report(State(state): State<AppState>, headers: HeaderMap) -> Result<Json<crate::TuringReport>> {
    require_admin(&state, &headers)?;
    let sessions = state.store().state().completed_sessions();
    Ok(Json(turing_report(&sessions)?))
}

async fn render(
    State(state): State<AppState>,
    Path((session_id, item_id, view)): Path<(String, String, String)>,
) -> Result<Response> {
    let snapshot = state.store().state();
    let session = snapshot.session(&session_id)?;
    let item = session
        .item(&item_id)
        .ok_or_else(|| TuringError::UnknownItem(item_id.clone()))?;
    let k = VIEW_NAMES
        .iter()
        .position(|v| *v == view)
        .ok_or_else(|| TuringError::UnknownItem(format!("{item_id}/{view}")))?;
    let path = item.renders[k].clone();
    let bytes = tokio::fs::read(&path).await.map_err(|e| TuringError::io(&path, e))?;
    Ok(([(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "no-store")], bytes).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/scores", post(score))
        .route("/sessions/{id}/close", post(close))
        .route("/report", get(report))
        .route("/renders/{session}/{item}/{view}", get(render))
        .with_state(state)
}

/// Open the store, load the pool and serve until the process is stopped.
pub async fn serve(config: ServiceConfig) -> Result<()> {
    let pool = CasePool::load(&config.pool_path)?;
    let store = Store::open(&config.data_dir)?;
    let state = AppState::new(store, pool, config.admin_token, config.rubric);
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .map_err(|e| TuringError::io(config.bind.to_string(), e))?;
    log::info!("listening on {}", config.bind);
    axum::serve(listener, router(state))
        .await
        .map_err(|e| TuringError::io(config.bind.to_string(), e))
}
