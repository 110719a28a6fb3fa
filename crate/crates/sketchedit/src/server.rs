//! Stateless HTTP edit service.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use sketchedit_core::editor::{rasterize_user_input, user_conditioning, EditModel};
use sketchedit_core::{Error as CoreError, RasterImage};

use crate::api::{self, CopyPastePayload, EditPayload, FieldError, ImageResponse, PreviewResponse};
use crate::imageio;

/// Read-only model shared by all handlers, plus counters.
#[derive(Debug)]
pub struct AppState {
    pub model: EditModel,
    pub model_hash: String,
    forwards: AtomicU64,
    errors: AtomicU64,
}

impl AppState {
    pub fn new(model: EditModel, model_hash: String) -> Self {
        Self { model, model_hash, forwards: AtomicU64::new(0), errors: AtomicU64::new(0) }
    }

    /// Generator forward passes run so far.
    pub fn forwards(&self) -> u64 {
        self.forwards.load(Ordering::SeqCst)
    }

    fn complete(&self, image: &RasterImage, mask: &sketchedit_core::BinaryMask, input: Vec<f32>) -> sketchedit_core::Result<RasterImage> {
        self.forwards.fetch_add(1, Ordering::SeqCst);
        self.model.complete(image, mask, input)
    }
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(FieldError),
    Unprocessable(String),
    Internal(u64),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::BadRequest(e) => (StatusCode::BAD_REQUEST, Json(json!({"error": e.message, "field": e.field}))).into_response(),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({"error": m}))).into_response(),
            ApiError::Internal(id) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": "internal error", "id": id}))).into_response(),
        }
    }
}

impl AppState {
    fn classify(&self, e: CoreError) -> ApiError {
        match e {
            CoreError::InvalidArgument(m) => ApiError::Unprocessable(m),
            CoreError::ConfigMismatch(m) => ApiError::Unprocessable(m),
            CoreError::Shape { .. } => ApiError::Unprocessable(e.to_string()),
            other => {
                let id = self.errors.fetch_add(1, Ordering::SeqCst) + 1;
                eprintln!("request error {id}: {other}");
                ApiError::Internal(id)
            }
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/edit", post(edit))
        .route("/v1/copy-paste", post(copy_paste))
        .route("/v1/sketch-preview", post(sketch_preview))
        .with_state(state)
}

async fn health(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({"status": "ok", "model": s.model_hash}))
}

async fn blocking<T: Send + 'static>(s: &Arc<AppState>, f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r,
        Err(e) => {
            let id = s.errors.fetch_add(1, Ordering::SeqCst) + 1;
            eprintln!("request error {id}: worker failed: {e}");
            Err(ApiError::Internal(id))
        }
    }
}

fn image_response(img: &RasterImage) -> Json<ImageResponse> {
    Json(ImageResponse { image: api::b64(&imageio::encode_png(img)) })
}

async fn edit(State(s): State<Arc<AppState>>, body: Bytes) -> Result<Json<ImageResponse>, ApiError> {
    let payload: EditPayload = api::parse(&body).map_err(ApiError::BadRequest)?;
    let st = s.clone();
    blocking(&s, move || {
        let req = payload.to_request().map_err(ApiError::BadRequest)?;
        let input = rasterize_user_input(&req, &st.model.data).map_err(|e| st.classify(e))?;
        let out = st.complete(&req.image, &req.mask, input).map_err(|e| st.classify(e))?;
        Ok(image_response(&out))
    })
    .await
}

async fn copy_paste(State(s): State<Arc<AppState>>, body: Bytes) -> Result<Json<ImageResponse>, ApiError> {
    let payload: CopyPastePayload = api::parse(&body).map_err(ApiError::BadRequest)?;
    let st = s.clone();
    blocking(&s, move || {
        let req = payload.to_request().map_err(ApiError::BadRequest)?;
        let (mask, input) = st.model.copy_paste_input(&req).map_err(|e| st.classify(e))?;
        let out = st.complete(&req.target, &mask, input).map_err(|e| st.classify(e))?;
        Ok(image_response(&out))
    })
    .await
}

async fn sketch_preview(State(s): State<Arc<AppState>>, body: Bytes) -> Result<Json<PreviewResponse>, ApiError> {
    let payload: EditPayload = api::parse(&body).map_err(ApiError::BadRequest)?;
    let st = s.clone();
    blocking(&s, move || {
        let req = payload.to_request().map_err(ApiError::BadRequest)?;
        let cond = user_conditioning(&req).map_err(|e| st.classify(e))?;
        let sketch = cond.sketch.and(&req.mask);
        let color = cond.color.restricted(&req.mask);
        Ok(Json(PreviewResponse { sketch: api::b64(&imageio::encode_mask_png(&sketch)), color: api::b64(&imageio::encode_color_png(&color)) }))
    })
    .await
}

/// Serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
