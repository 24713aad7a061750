//! HTTP front end over a [`Snapshot`].
//!
//! - `GET /recommend?user=<id>&k=<K>&scope=intra|cross|all`
//! - `GET /healthz`
//! - `POST /reload` rebuilds the snapshot from the run directory and swaps
//!   it in once ready; requests in flight keep the old one.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use coderec_core::recommend::Scope;
use serde_json::json;

use crate::run::Snapshot;
use crate::CliError;

pub struct AppState {
    run_dir: PathBuf,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl AppState {
    pub fn new(run_dir: PathBuf, snapshot: Snapshot) -> Self {
        AppState {
            run_dir,
            snapshot: RwLock::new(Arc::new(snapshot)),
        }
    }

    fn current(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": message.into()}))).into_response()
}

fn status_of(e: &CliError) -> StatusCode {
    match e {
        CliError::Core(coderec_core::Error::NotFound(_)) => StatusCode::NOT_FOUND,
        CliError::Core(coderec_core::Error::Argument(_)) | CliError::Usage(_) => {
            StatusCode::BAD_REQUEST
        }
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

async fn recommend(
    State(state): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> Response {
    let Some(user) = q.get("user").filter(|u| !u.is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing user");
    };
    let k = match q.get("k").map(|k| k.parse::<usize>()) {
        None => 10,
        Some(Ok(k)) if k > 0 => k,
        Some(_) => return error(StatusCode::BAD_REQUEST, "k must be a positive integer"),
    };
    let scope = match q.get("scope").map(|s| s.parse::<Scope>()) {
        None => Scope::Intra,
        Some(Ok(s)) => s,
        Some(Err(e)) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    match state.current().query(user, k, scope) {
        Ok(r) => Json(r).into_response(),
        Err(e) => error(status_of(&e), e.to_string()),
    }
}

async fn healthz(State(state): State<Arc<AppState>>) -> Response {
    let s = state.current();
    Json(json!({
        "status": "ok",
        "model": s.digest,
        "tag": s.tag,
        "users": s.users(),
        "files": s.files(),
    }))
    .into_response()
}

async fn reload(State(state): State<Arc<AppState>>) -> Response {
    let dir = state.run_dir.clone();
    let fresh = tokio::task::spawn_blocking(move || Snapshot::load(&dir)).await;
    match fresh {
        Ok(Ok(s)) => {
            let digest = s.digest.clone();
            *state.snapshot.write().expect("snapshot lock") = Arc::new(s);
            Json(json!({"status": "reloaded", "model": digest})).into_response()
        }
        Ok(Err(e)) => error(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("reload failed: {e}"),
        ),
        Err(e) => error(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("reload failed: {e}"),
        ),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/recommend", get(recommend))
        .route("/healthz", get(healthz))
        .route("/reload", post(reload))
        .with_state(state)
}

/// Serves until the process is killed. `ready` gets the bound address
/// (useful with port 0).
pub fn serve(
    state: AppState,
    addr: SocketAddr,
    ready: impl FnOnce(SocketAddr),
) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        ready(listener.local_addr()?);
        axum::serve(listener, router(Arc::new(state))).await
    })
}
