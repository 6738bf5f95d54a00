//! Local JSON service over the session store.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::session::{SessionError, SessionStore};
use crate::spec::ExperimentSpec;

impl IntoResponse for SessionError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = json!({ "error": { "code": self.code(), "message": self.to_string() } });
        (status, Json(body)).into_response()
    }
}

type Shared = Arc<SessionStore>;
type Reply = Result<Response, SessionError>;

fn body<T>(b: Result<Json<T>, JsonRejection>) -> Result<T, SessionError> {
    b.map(|Json(v)| v).map_err(|e| SessionError::InvalidRequest(e.body_text()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutcomeRequest {
    placement: String,
    outcome: String,
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

/// Body `{"config": <experiment>}`; a malformed body and a bad config get
/// different codes.
async fn create(State(store): State<Shared>, req: Result<Json<serde_json::Value>, JsonRejection>) -> Reply {
    let mut req = body(req)?;
    let obj = req
        .as_object_mut()
        .ok_or_else(|| SessionError::InvalidRequest("body must be an object".into()))?;
    let config = obj
        .remove("config")
        .ok_or_else(|| SessionError::InvalidRequest("missing field `config`".into()))?;
    if let Some(k) = obj.keys().next() {
        return Err(SessionError::InvalidRequest(format!("unknown field `{k}`")));
    }
    let config: ExperimentSpec =
        serde_json::from_value(config).map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
    let view = store.create(config)?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn state(State(store): State<Shared>, Path(id): Path<String>) -> Reply {
    Ok(Json(store.with(&id, |s| s.view())?).into_response())
}

async fn propose(State(store): State<Shared>, Path(id): Path<String>) -> Reply {
    Ok(Json(store.with(&id, |s| s.propose())?).into_response())
}

async fn outcome(
    State(store): State<Shared>,
    Path(id): Path<String>,
    req: Result<Json<OutcomeRequest>, JsonRejection>,
) -> Reply {
    let req = body(req)?;
    Ok(Json(store.record_outcome(&id, &req.placement, &req.outcome)?).into_response())
}

async fn undo(State(store): State<Shared>, Path(id): Path<String>) -> Reply {
    Ok(Json(store.undo(&id)?).into_response())
}

async fn export(State(store): State<Shared>, Path(id): Path<String>) -> Reply {
    Ok(Json(store.with(&id, |s| Ok(s.record()))?).into_response())
}

async fn not_found() -> SessionError {
    SessionError::UnknownEndpoint
}

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(state))
        .route("/sessions/{id}/propose", post(propose))
        .route("/sessions/{id}/outcomes", post(outcome))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/export", get(export))
        .fallback(not_found)
        .layer(CorsLayer::permissive())
        .with_state(store)
}

/// Serves until interrupted.
pub async fn serve(addr: SocketAddr, store: SessionStore) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!(
        "{}",
        json!({ "listening": listener.local_addr()?.to_string(), "sessions": store.len() })
    );
    axum::serve(listener, router(Arc::new(store)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
