//! HTTP service: `/v1/edit`, `/v1/map`, `/v1/backends`, `/v1/health`.

use std::{
    net::SocketAddr,
    sync::{
        atomic::{AtomicU64, Ordering},
        Arc,
    },
    time::Duration,
};

use axum::{
    body::Bytes,
    extract::{DefaultBodyLimit, FromRequest, Multipart, Request, State},
    http::{header::CONTENT_TYPE, StatusCode},
    response::{IntoResponse, Response},
    routing::{get, post},
    Json, Router,
};
use base64::{engine::general_purpose::STANDARD as B64, Engine as _};
use regiondrag_core::{mapping::map_region_pairs, EditConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use crate::{
    backends::Registry,
    edit::{execute_edit, EditRequest, EditResponse},
    error::{AppError, ErrorClass},
    formats::{region_pairs, MappingExport, RegionPairRecord},
};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_body_bytes: usize,
    pub timeout: Duration,
    /// Edits running at once; further requests wait for a slot.
    pub max_sessions: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_body_bytes: 16 << 20,
            timeout: Duration::from_secs(60),
            max_sessions: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

pub struct AppState {
    pub registry: Registry,
    /// Base configuration that request overrides apply to.
    pub config: EditConfig,
    pub limits: ServiceConfig,
    sessions: Semaphore,
    seeds: AtomicU64,
}

impl AppState {
    pub fn new(registry: Registry, config: EditConfig, limits: ServiceConfig) -> Arc<Self> {
        let origin = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos() as u64);
        Arc::new(Self {
            registry,
            config,
            sessions: Semaphore::new(limits.max_sessions.max(1)),
            limits,
            seeds: AtomicU64::new(origin),
        })
    }

    /// Distinct per request; splitmix64 of a counter started from the clock.
    fn next_seed(&self) -> u64 {
        let mut z = self.seeds.fetch_add(0x9e37_79b9_7f4a_7c15, Ordering::Relaxed);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        (z ^ (z >> 31)) >> 11
    }
}

pub enum ApiError {
    App(AppError),
    /// Rejected while reading the body, e.g. 413 over the size cap.
    Body(StatusCode, String),
}

impl<E: Into<AppError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError::App(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::App(e) => {
                let status = match e.class() {
                    ErrorClass::Validation => StatusCode::BAD_REQUEST,
                    ErrorClass::Degenerate => StatusCode::UNPROCESSABLE_ENTITY,
                    ErrorClass::Pipeline => StatusCode::INTERNAL_SERVER_ERROR,
                };
                (status, json!({ "error": e.to_string(), "stage": e.stage() }))
            }
            ApiError::Body(status, text) => (status, json!({ "error": text, "stage": null })),
        };
        (status, Json(body)).into_response()
    }
}

fn bad_request(what: &'static str, e: impl ToString) -> ApiError {
    ApiError::App(AppError::format(what, e))
}

macro_rules! body_err {
    () => {
        |e| ApiError::Body(e.status(), e.body_text())
    };
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.limits.max_body_bytes;
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/backends", get(backends))
        .route("/v1/map", post(map))
        .route("/v1/edit", post(edit))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn backends(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "default": state.registry.default_name(),
        "backends": state.registry.list().collect::<Vec<_>>(),
        "codecs": ["identity", "pool", "pool:<factor>"],
    }))
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MapRequest {
    pub regions: Vec<RegionPairRecord>,
    /// Map on the grid downscaled by this factor; 1 maps in image pixels.
    #[serde(default = "one")]
    pub latent_factor: u32,
}

fn one() -> u32 {
    1
}

async fn map(body: Bytes) -> Result<Json<MappingExport>, ApiError> {
    let req: MapRequest = serde_json::from_slice(&body).map_err(|e| bad_request("map request", e))?;
    if req.latent_factor == 0 {
        return Err(bad_request("map request", "latent_factor must be >= 1"));
    }
    if req.regions.is_empty() {
        return Err(bad_request("map request", "regions must not be empty"));
    }
    let pairs = region_pairs(&req.regions)?;
    let (mapping, conflicts) = map_region_pairs(&pairs, req.latent_factor)?;
    Ok(Json(MappingExport::new(&mapping, &conflicts)))
}

/// JSON body, or multipart with a `request` JSON part and an `image` PNG part
/// that fills in the request's image.
async fn read_edit_request(req: Request) -> Result<EditRequest, ApiError> {
    let multipart = req
        .headers()
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if !multipart {
        let body = Bytes::from_request(req, &()).await.map_err(body_err!())?;
        return serde_json::from_slice(&body).map_err(|e| bad_request("edit request", e));
    }
    let mut form = Multipart::from_request(req, &()).await.map_err(body_err!())?;
    let (mut request, mut image) = (serde_json::Value::Object(Default::default()), None);
    while let Some(field) = form.next_field().await.map_err(body_err!())? {
        match field.name() {
            Some("request") => {
                let bytes = field.bytes().await.map_err(body_err!())?;
                request = serde_json::from_slice(&bytes).map_err(|e| bad_request("edit request", e))?;
            }
            Some("image") => image = Some(field.bytes().await.map_err(body_err!())?),
            other => return Err(bad_request("multipart", format!("unexpected part {other:?}"))),
        }
    }
    if let (Some(bytes), Some(obj)) = (image, request.as_object_mut()) {
        obj.insert("image".into(), json!({ "png_base64": B64.encode(&bytes) }));
    }
    serde_json::from_value(request).map_err(|e| bad_request("edit request", e))
}

async fn edit(State(state): State<Arc<AppState>>, req: Request) -> Result<Json<EditResponse>, ApiError> {
    let request = read_edit_request(req).await?;
    let seed = state.next_seed();
    let _permit = state.sessions.acquire().await.expect("session pool is never closed");
    let worker = Arc::clone(&state);
    let task = tokio::task::spawn_blocking(move || {
        let job = request.resolve(&worker.config, seed)?;
        execute_edit(&worker.registry, &job).map(|r| EditResponse::from(&r))
    });
    match tokio::time::timeout(state.limits.timeout, task).await {
        Ok(Ok(result)) => Ok(Json(result?)),
        Ok(Err(join)) => Err(ApiError::App(AppError::Core(regiondrag_core::Error::Backend {
            backend: "worker".into(),
            message: join.to_string(),
        }))),
        Err(_) => Err(ApiError::App(AppError::Timeout(state.limits.timeout.as_secs()))),
    }
}

/// Serves until interrupted.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
