//! HTTP API for annotators and dashboards.
//!
//! All mutations go through one mutex, so battle log sequence numbers are
//! assigned in commit order.

use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{ArenaError, ArenaState, Choice};

pub type SharedArena = Arc<Mutex<ArenaState>>;

#[derive(Debug, Deserialize)]
pub struct ChoiceBody {
    pub winner: String,
    #[serde(default)]
    pub annotator: String,
}

impl IntoResponse for ArenaError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            ArenaError::Exhausted => (StatusCode::NOT_FOUND, "exhausted"),
            ArenaError::UnknownBattle(_) => (StatusCode::NOT_FOUND, "unknown_battle"),
            ArenaError::InvalidWinner(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_winner"),
            ArenaError::DuplicateSubmission(_) => (StatusCode::CONFLICT, "duplicate_submission"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        (
            status,
            Json(json!({ "error": code, "message": self.to_string() })),
        )
            .into_response()
    }
}

fn lock(arena: &SharedArena) -> std::sync::MutexGuard<'_, ArenaState> {
    arena
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
}

async fn next_battle(State(arena): State<SharedArena>) -> Result<Response, ArenaError> {
    let view = lock(&arena).next_battle()?;
    Ok(Json(view).into_response())
}

async fn choose(
    State(arena): State<SharedArena>,
    Path(id): Path<String>,
    Json(body): Json<ChoiceBody>,
) -> Result<Response, ArenaError> {
    let choice: Choice = body.winner.parse()?;
    let record = lock(&arena).record_choice(&id, choice, &body.annotator)?;
    tracing::info!(seq = record.seq, battle = %id, "choice recorded");
    Ok(Json(json!({ "seq": record.seq })).into_response())
}

async fn leaderboard(State(arena): State<SharedArena>) -> Response {
    Json(lock(&arena).leaderboard()).into_response()
}

async fn export(State(arena): State<SharedArena>) -> Response {
    let body = lock(&arena).export_log();
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

pub fn router(arena: SharedArena) -> Router {
    Router::new()
        .route("/api/battle/next", get(next_battle))
        .route("/api/battle/{id}/choice", post(choose))
        .route("/api/leaderboard", get(leaderboard))
        .route("/api/export", get(export))
        .with_state(arena)
}

/// Serves until the process is stopped.
pub async fn serve(arena: SharedArena, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "arena listening");
    axum::serve(listener, router(arena)).await
}
