//! HTTP front end for an [`AnnotationStore`].

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use super::{AnnotationError, AnnotationItem, AnnotationStore, Submission};

/// Environment variable holding the service port.
pub const PORT_ENV: &str = "ANNOTATION_PORT";

type Shared = Arc<Mutex<AnnotationStore>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub done: usize,
    pub remaining: usize,
}

/// What an annotator sees. The producing system and test set stay hidden.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemView {
    pub item_id: String,
    pub stated_premise: String,
    pub stated_claim: String,
    pub candidate_premise: String,
    pub progress: Progress,
}

impl ItemView {
    fn new(item: AnnotationItem, progress: Progress) -> Self {
        ItemView {
            item_id: item.item_id,
            stated_premise: item.stated_premise,
            stated_claim: item.stated_claim,
            candidate_premise: item.candidate_premise,
            progress,
        }
    }
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

#[derive(Deserialize)]
struct JudgmentBody {
    item_id: String,
    annotator_id: String,
    plausible: bool,
}

fn error_response(err: AnnotationError) -> Response {
    let status = match &err {
        AnnotationError::UnknownItem(_) => StatusCode::NOT_FOUND,
        AnnotationError::Conflict { .. } | AnnotationError::NotServed { .. } | AnnotationError::ItemFull(_) => {
            StatusCode::CONFLICT
        }
        AnnotationError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    (status, Json(json!({ "error": err.to_string() }))).into_response()
}

fn lock(state: &Shared) -> std::sync::MutexGuard<'_, AnnotationStore> {
    // a panic mid-request leaves the store consistent: state changes only after the journal write
    state.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

async fn health(State(state): State<Shared>) -> Json<serde_json::Value> {
    let store = lock(&state);
    Json(json!({
        "status": "ok",
        "items": store.items().count(),
        "judgments": store.judgment_count(),
    }))
}

async fn next_item(State(state): State<Shared>, Query(q): Query<NextQuery>) -> Response {
    let annotator = q.annotator.unwrap_or_default();
    let mut store = lock(&state);
    match store.next_item(&annotator) {
        Ok(Some(item)) => {
            let (done, remaining) = store.progress(&annotator);
            Json(ItemView::new(item, Progress { done, remaining })).into_response()
        }
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => error_response(e),
    }
}

async fn submit(State(state): State<Shared>, body: Result<Json<JudgmentBody>, JsonRejection>) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(rejection) => return error_response(AnnotationError::InvalidRequest(rejection.body_text())),
    };
    let mut store = lock(&state);
    match store.submit(&body.item_id, &body.annotator_id, body.plausible, Utc::now()) {
        Ok(Submission::Recorded(r) | Submission::Duplicate(r)) => (StatusCode::CREATED, Json(r)).into_response(),
        Err(e) => error_response(e),
    }
}

async fn report(State(state): State<Shared>) -> Response {
    let store = lock(&state);
    match store.report() {
        Ok(r) => Json(r).into_response(),
        Err(e) => error_response(e),
    }
}

/// Routes of the annotation API, with static files from `ui_dir` under `/ui`.
pub fn router(store: AnnotationStore, ui_dir: Option<PathBuf>) -> Router {
    let state: Shared = Arc::new(Mutex::new(store));
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/items/next", get(next_item))
        .route("/judgments", post(submit))
        .route("/report", get(report));
    if let Some(dir) = ui_dir {
        if !dir.is_dir() {
            log::warn!("ui directory {} does not exist; /ui will return 404", dir.display());
        }
        app = app.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app.with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(store: AnnotationStore, addr: SocketAddr, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(store, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
