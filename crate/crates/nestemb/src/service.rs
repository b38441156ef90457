//! HTTP JSON API over a fixed set of loaded models.

use std::future::Future;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nestemb_core::{EmbeddingVector, EncoderModel, Error as CoreError, SimilarityMetric};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;

use crate::format::{self, FormatError};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_BODY_LIMIT: usize = 64 * 1024;
pub const MODEL_EXTENSION: &str = "mxem";

pub struct AppState {
    /// Sorted by id.
    models: Vec<(String, EncoderModel)>,
    started: Instant,
}

impl AppState {
    pub fn new(mut models: Vec<(String, EncoderModel)>) -> Self {
        models.sort_by(|a, b| a.0.cmp(&b.0));
        Self {
            models,
            started: Instant::now(),
        }
    }

    fn model(&self, id: &str) -> Result<&EncoderModel, ApiError> {
        self.models
            .iter()
            .find(|(m, _)| m == id)
            .map(|(_, m)| m)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown model_id {id:?}")))
    }
}

/// Loads every `*.mxem` file in `dir`; the model id is the file stem.
pub fn load_models_dir(dir: &Path) -> Result<Vec<(String, EncoderModel)>, FormatError> {
    let io = |source| FormatError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    paths.retain(|p| p.extension().is_some_and(|e| e == MODEL_EXTENSION));
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            Ok((id, format::load_model(&p)?))
        })
        .collect()
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.status.as_u16(), "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

/// JSON body parsing with errors in the API's own shape.
fn parse_body<T: DeserializeOwned>(body: Result<Bytes, BytesRejection>) -> Result<T, ApiError> {
    let bytes = body.map_err(|r| ApiError::new(r.status(), r.body_text()))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn check_dim(model: &EncoderModel, dim: usize) -> Result<(), ApiError> {
    if model.ladder().contains(dim) {
        Ok(())
    } else {
        Err(ApiError::bad_request(format!(
            "dim {dim} is not in the model ladder [{}]",
            model.ladder()
        )))
    }
}

#[derive(Serialize)]
struct ModelInfo<'a> {
    model_id: &'a str,
    full_dim: usize,
    ladder: &'a [usize],
}

async fn list_models(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let models: Vec<ModelInfo<'_>> = state
        .models
        .iter()
        .map(|(id, m)| ModelInfo {
            model_id: id,
            full_dim: m.dim(),
            ladder: m.ladder().dims(),
        })
        .collect();
    Json(json!({ "models": models }))
}

#[derive(Deserialize)]
struct EmbedRequest {
    model_id: String,
    dim: usize,
    texts: Vec<String>,
}

async fn embed(
    State(state): State<Arc<AppState>>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let req: EmbedRequest = parse_body(body)?;
    let model = state.model(&req.model_id)?;
    check_dim(model, req.dim)?;
    if req.texts.is_empty() {
        return Err(ApiError::bad_request("texts must not be empty"));
    }
    let vectors = req
        .texts
        .iter()
        .map(|t| model.encode(t, req.dim).map(EmbeddingVector::into_vec))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(
        json!({ "model_id": req.model_id, "dim": req.dim, "vectors": vectors }),
    ))
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Mode {
    Pair,
    OneVsThree,
}

#[derive(Deserialize)]
struct SimilarityRequest {
    model_id: String,
    dim: usize,
    mode: Mode,
    sentence_a: String,
    sentences_b: Vec<String>,
}

async fn similarity(
    State(state): State<Arc<AppState>>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let req: SimilarityRequest = parse_body(body)?;
    let model = state.model(&req.model_id)?;
    check_dim(model, req.dim)?;
    let (expected, name) = match req.mode {
        Mode::Pair => (1, "pair"),
        Mode::OneVsThree => (3, "one_vs_three"),
    };
    if req.sentences_b.len() != expected {
        return Err(ApiError::bad_request(format!(
            "mode {name} needs {expected} sentences_b, got {}",
            req.sentences_b.len()
        )));
    }
    let encode = |text: &str, label: String| {
        let v = model
            .encode(text, req.dim)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        if v.norm() < nestemb_core::embedding::MIN_NORM {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("{label} has a zero-norm embedding"),
            ));
        }
        Ok(v)
    };
    let a = encode(&req.sentence_a, "sentence_a".into())?;
    let scores = req
        .sentences_b
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let b = encode(b, format!("sentences_b[{i}]"))?;
            SimilarityMetric::Cosine
                .raw(&a, &b)
                .map_err(|e: CoreError| {
                    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
                })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(Json(
        json!({ "model_id": req.model_id, "dim": req.dim, "scores": scores }),
    ))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "models_loaded": state.models.len(),
        "uptime_seconds": state.started.elapsed().as_secs_f64(),
    }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method not allowed")
}

async fn log_request(req: Request, next: Next) -> Response {
    let start = Instant::now();
    let (method, route) = (req.method().clone(), req.uri().path().to_owned());
    let response = next.run(req).await;
    tracing::info!(
        %method,
        route,
        status = response.status().as_u16(),
        latency_ms = start.elapsed().as_secs_f64() * 1e3,
        "request"
    );
    response
}

pub fn router(state: Arc<AppState>, body_limit: usize) -> Router {
    Router::new()
        .route("/v1/models", get(list_models))
        .route("/v1/embed", post(embed))
        .route("/v1/similarity", post(similarity))
        .route("/v1/health", get(health))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(DefaultBodyLimit::max(body_limit))
        .layer(middleware::from_fn(log_request))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: Arc<AppState>,
    body_limit: usize,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state, body_limit))
        .with_graceful_shutdown(shutdown)
        .await
}
