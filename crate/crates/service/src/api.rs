//! HTTP routes.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET/POST | `/api/session` | [`SessionInfo`] |
//! | GET | `/api/session/{id}/next?round=N` | [`NextResponse`] |
//! | POST | `/api/session/{id}/label` | [`LabelRequest`] → [`LabelAck`] |
//! | GET | `/api/status` | [`StatusView`] |
//! | GET | `/api/ledger` | [`LedgerView`] |
//! | GET | `/api/metrics` | [`MetricsView`] |
//! | GET | `/api/curve` | [`CurveView`] |
//!
//! With an asset directory, `/thumbnails/*` serves `<assets>/thumbnails` and
//! every other path falls through to the directory itself.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

use crate::error::ApiError;
use crate::state::{retrain, CurveView, LabelAck, LabelRequest, LedgerView, MetricsView, NextResponse, ServiceState, SessionInfo, StatusView};

pub type Shared = Arc<Mutex<ServiceState>>;

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: ServiceState) -> Router {
    let assets = state.options().assets.clone();
    let shared: Shared = Arc::new(Mutex::new(state));
    let api = Router::new()
        .route("/api/session", get(open_session).post(open_session))
        .route("/api/session/{id}/next", get(next))
        .route("/api/session/{id}/label", post(label))
        .route("/api/status", get(status))
        .route("/api/ledger", get(ledger))
        .route("/api/metrics", get(metrics))
        .route("/api/curve", get(curve))
        .with_state(shared);
    match assets {
        Some(dir) => api
            .nest_service("/thumbnails", ServeDir::new(dir.join("thumbnails")))
            .fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `addr` and serves until the process stops.
pub async fn serve(state: ServiceState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

fn lock(shared: &Shared) -> std::sync::MutexGuard<'_, ServiceState> {
    shared.lock().expect("service lock")
}

async fn open_session(State(shared): State<Shared>) -> Json<SessionInfo> {
    Json(lock(&shared).open_session())
}

#[derive(Debug, Deserialize)]
struct NextParams {
    round: Option<usize>,
}

async fn next(
    State(shared): State<Shared>,
    Path(id): Path<String>,
    Query(params): Query<NextParams>,
) -> ApiResult<NextResponse> {
    let shared2 = shared.clone();
    tokio::task::spawn_blocking(move || lock(&shared2).next(&id, params.round, Instant::now()))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map(Json)
}

async fn label(
    State(shared): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<LabelRequest>, JsonRejection>,
) -> ApiResult<LabelAck> {
    let Json(req) = body.map_err(|e| ApiError::bad_request("invalid_request", e.body_text()))?;
    tokio::task::spawn_blocking(move || {
        let mut ack = lock(&shared).label(&id, &req, Instant::now())?;
        if ack.batch_complete {
            retrain(&shared)?;
            let st = lock(&shared).status();
            ack.iteration = st.iteration;
            ack.model_version = st.model_version;
            ack.pending = st.pending;
        }
        Ok(Json(ack))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn status(State(shared): State<Shared>) -> Json<StatusView> {
    Json(lock(&shared).status())
}

async fn ledger(State(shared): State<Shared>) -> Json<LedgerView> {
    Json(lock(&shared).ledger())
}

async fn metrics(State(shared): State<Shared>) -> Json<MetricsView> {
    Json(lock(&shared).metrics())
}

async fn curve(State(shared): State<Shared>) -> Json<CurveView> {
    Json(lock(&shared).curve())
}
