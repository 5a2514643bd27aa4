//! HTTP+JSON front end for [`SessionStore`].
//!
//! | route | effect |
//! |---|---|
//! | `POST /sessions` | create from `{policy, hyperparams?, seed?, lexicon?}`, returns `{id}` |
//! | `GET /sessions/{id}/query` | pending query `{word, step, chosen_basic}` |
//! | `POST /sessions/{id}/judgment` | `{accept}`, returns the new state |
//! | `GET /sessions/{id}/state` | state summary |
//! | `GET /sessions/{id}/export` | observations, hyperparameters and posterior |
//! | `POST /sessions/{id}/rebuild` | refit from the prior |
//! | `DELETE /sessions/{id}` | drop the session |
//!
//! Errors are `{code, message}` with a matching status.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use uuid::Uuid;

use crate::session::{CreateSession, SessionError, SessionStore};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.to_owned(), message: message.into() } }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::NotFound(_) => StatusCode::NOT_FOUND,
            SessionError::Busy(_) | SessionError::NoPendingQuery => StatusCode::CONFLICT,
            SessionError::BadRequest(_) => StatusCode::BAD_REQUEST,
            SessionError::Core(phonoquery_core::Error::LexiconExhausted) => StatusCode::CONFLICT,
            SessionError::Core(
                phonoquery_core::Error::LexiconRequired(_)
                | phonoquery_core::Error::InvalidHyperparams(_)
                | phonoquery_core::Error::UnknownPolicy(_),
            ) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Core(_) | SessionError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{e}");
        }
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(e.status(), "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Shared = Arc<SessionStore>;

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: Uuid,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JudgmentBody {
    pub accept: bool,
}

fn parse_id(raw: &str) -> Result<Uuid, ApiError> {
    raw.parse().map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no session {raw}")))
}

/// Runs CPU-bound learner work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, SessionError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

async fn create(State(store): State<Shared>, body: Result<Json<CreateSession>, JsonRejection>) -> Result<(StatusCode, Json<Created>), ApiError> {
    let Json(req) = body?;
    let id = blocking(move || store.create(req)).await?;
    Ok((StatusCode::CREATED, Json(Created { id })))
}

async fn query(State(store): State<Shared>, Path(raw): Path<String>) -> ApiResult<crate::session::QueryView> {
    let id = parse_id(&raw)?;
    blocking(move || store.mutate(id, |s| s.query())).await.map(Json)
}

async fn judgment(
    State(store): State<Shared>,
    Path(raw): Path<String>,
    body: Result<Json<JudgmentBody>, JsonRejection>,
) -> ApiResult<crate::session::StateSummary> {
    let id = parse_id(&raw)?;
    let Json(JudgmentBody { accept }) = body?;
    blocking(move || store.mutate(id, |s| s.judge(accept))).await.map(Json)
}

async fn state(State(store): State<Shared>, Path(raw): Path<String>) -> ApiResult<crate::session::StateSummary> {
    let id = parse_id(&raw)?;
    blocking(move || store.read(id, |s| s.summary())).await.map(Json)
}

async fn export(State(store): State<Shared>, Path(raw): Path<String>) -> ApiResult<crate::session::SessionExport> {
    let id = parse_id(&raw)?;
    blocking(move || store.read(id, |s| s.export())).await.map(Json)
}

async fn rebuild(State(store): State<Shared>, Path(raw): Path<String>) -> ApiResult<crate::session::StateSummary> {
    let id = parse_id(&raw)?;
    blocking(move || store.mutate(id, |s| s.rebuild())).await.map(Json)
}

async fn delete(State(store): State<Shared>, Path(raw): Path<String>) -> Result<StatusCode, ApiError> {
    let id = parse_id(&raw)?;
    blocking(move || store.delete(id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(store: Arc<SessionStore>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", axum::routing::delete(delete))
        .route("/sessions/{id}/query", get(query))
        .route("/sessions/{id}/judgment", post(judgment))
        .route("/sessions/{id}/state", get(state))
        .route("/sessions/{id}/export", get(export))
        .route("/sessions/{id}/rebuild", post(rebuild))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    }
}

pub async fn serve(addr: std::net::SocketAddr, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
