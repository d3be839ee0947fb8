//! HTTP API.
//!
//! | route | |
//! |---|---|
//! | `GET /feeds` | feed list with status |
//! | `GET /feeds/{id}/frame` | still frame for calibration |
//! | `POST /feeds/{id}/calibration` | validate and install a calibration document |
//! | `GET /feeds/{id}/calibration` | current calibration document |
//! | `GET /feeds/{id}/metrics?horizon=300` | rolling metrics |
//! | `GET /feeds/{id}/overlay` | overlay records as a JSON-lines stream |
//! | `GET /capacity?aip=&cores=&gpu=&sef=` | supported feed count |

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::stream;
use sdguard_core::calibration::CalibrationDoc;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use crate::capacity::{capacity_estimate, CapacityInputs};
use crate::feed::FeedHandle;

pub const DEFAULT_HORIZON_S: f64 = 300.0;

#[derive(Clone)]
pub struct ApiState {
    feeds: Arc<BTreeMap<String, Arc<FeedHandle>>>,
}

impl ApiState {
    pub fn new(feeds: BTreeMap<String, Arc<FeedHandle>>) -> Self {
        Self { feeds: Arc::new(feeds) }
    }

    fn feed(&self, id: &str) -> Result<&Arc<FeedHandle>, Response> {
        self.feeds.get(id).ok_or_else(|| {
            error(StatusCode::NOT_FOUND, format!("unknown feed {id:?}"))
        })
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

pub fn router(state: ApiState) -> Router {
    Router::new()
        .route("/feeds", get(list_feeds))
        .route("/feeds/{id}/frame", get(still_frame))
        .route("/feeds/{id}/calibration", get(get_calibration).post(post_calibration))
        .route("/feeds/{id}/metrics", get(metrics))
        .route("/feeds/{id}/overlay", get(overlay))
        .route("/capacity", get(capacity))
        .with_state(state)
}

/// Serves the API until the listener fails or the future is dropped.
pub async fn serve(listener: tokio::net::TcpListener, state: ApiState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn list_feeds(State(s): State<ApiState>) -> Response {
    let feeds: Vec<_> = s.feeds.values().map(|f| f.summary()).collect();
    Json(feeds).into_response()
}

fn content_type(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("bmp") => "image/bmp",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    }
}

async fn still_frame(State(s): State<ApiState>, UrlPath(id): UrlPath<String>) -> Response {
    let feed = match s.feed(&id) {
        Ok(f) => f,
        Err(r) => return r,
    };
    let Some(path) = &feed.config.still_frame else {
        return error(StatusCode::NOT_FOUND, format!("feed {id:?} has no still frame configured"));
    };
    match tokio::fs::read(path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(path))], bytes).into_response(),
        Err(e) => error(StatusCode::NOT_FOUND, format!("still frame unavailable: {e}")),
    }
}

async fn get_calibration(State(s): State<ApiState>, UrlPath(id): UrlPath<String>) -> Response {
    let feed = match s.feed(&id) {
        Ok(f) => f,
        Err(r) => return r,
    };
    match feed.calibration() {
        Some(active) => Json(&active.doc).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("feed {id:?} is not calibrated")),
    }
}

async fn post_calibration(State(s): State<ApiState>, UrlPath(id): UrlPath<String>, body: String) -> Response {
    let feed = match s.feed(&id) {
        Ok(f) => f,
        Err(r) => return r,
    };
    let result = CalibrationDoc::from_json(&body).and_then(|doc| {
        let mode = doc.mode();
        feed.set_calibration(doc).map(|()| mode)
    });
    match result {
        Ok(mode) => Json(json!({ "status": "accepted", "mode": mode })).into_response(),
        Err(errors) => (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "errors": errors }))).into_response(),
    }
}

#[derive(Deserialize)]
struct MetricsQuery {
    horizon: Option<f64>,
}

async fn metrics(
    State(s): State<ApiState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<MetricsQuery>,
) -> Response {
    let feed = match s.feed(&id) {
        Ok(f) => f,
        Err(r) => return r,
    };
    let horizon = q.horizon.unwrap_or(DEFAULT_HORIZON_S);
    if !(horizon > 0.0 && horizon.is_finite()) {
        return error(StatusCode::BAD_REQUEST, "horizon must be a positive number of seconds");
    }
    let r = feed.rolling(horizon);
    let m = &r.metrics;
    Json(json!({
        "feed": id,
        "horizon_s": horizon,
        "window_count": r.window_count,
        "start_ts": r.start_ts,
        "end_ts": r.end_ts,
        "distinct_people": m.distinct_people,
        "violation_pairs": m.violation_pairs,
        "high_risk_pairs": m.high_risk_pairs,
        "violators": m.violators,
        "ratio": m.violations_to_violators,
        "clusters": m.cluster_sizes,
        "max_cluster": m.max_cluster,
    }))
    .into_response()
}

async fn overlay(State(s): State<ApiState>, UrlPath(id): UrlPath<String>) -> Response {
    let feed = match s.feed(&id) {
        Ok(f) => f,
        Err(r) => return r,
    };
    let rx = feed.subscribe();
    let lines = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(line) => {
                    let mut chunk = line.to_string();
                    chunk.push('\n');
                    return Some((Ok::<_, std::convert::Infallible>(chunk), rx));
                }
                // A slow client skips records rather than stalling the feed.
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    });
    (
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(lines),
    )
        .into_response()
}

#[derive(Deserialize)]
struct CapacityQuery {
    aip: f64,
    cores: u32,
    gpu: u32,
    sef: f64,
}

async fn capacity(Query(q): Query<CapacityQuery>) -> Response {
    let inputs = CapacityInputs {
        aip: q.aip,
        cpu_cores: q.cores,
        gpu_memory_gb: q.gpu,
        sef: q.sef,
    };
    match capacity_estimate(&inputs) {
        Ok(n) => Json(json!({ "feeds": n, "maxal": inputs.maxal() })).into_response(),
        Err(e) => error(StatusCode::BAD_REQUEST, e.to_string()),
    }
}
