//! HTTP front end: render frames on request and list the datasets on disk.
//!
//! Attenuation buffers are cached by everything they depend on, so a
//! request that only moves the camera skips the build entirely.

pub mod cache;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::warn;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use slicecast::{
    build_attenuation_buffer, make_slice_stack, render, render_half_angle, BufferOptions, ControlPoint, LightCamera,
    LookupMode, RenderSettings, Renderer, TransferFunction, VolumeDataset, VolumeDescriptor,
};

use crate::cache::{BufferCache, BufferKey};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub max_concurrency: usize,
    pub cache_capacity: usize,
    /// Largest accepted viewport side.
    pub max_viewport: usize,
    /// Largest accepted `n_slices * width * height` of a buffer.
    pub max_buffer_texels: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            max_concurrency: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cache_capacity: 8,
            max_viewport: 1024,
            max_buffer_texels: 512 * 512 * 512,
        }
    }
}

/// Preset name or inline control points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransferSpec {
    Points(Vec<ControlPoint>),
    Preset(String),
}

impl Default for TransferSpec {
    fn default() -> Self {
        TransferSpec::Preset("grayscale".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderRequest {
    pub dataset: String,
    #[serde(default)]
    pub transfer_function: TransferSpec,
    #[serde(default)]
    pub renderer: Renderer,
    #[serde(flatten)]
    pub settings: RenderSettings,
    #[serde(default = "default_slices")]
    pub n_slices: usize,
    #[serde(default = "default_resolution")]
    pub buffer_resolution: [usize; 2],
    #[serde(default)]
    pub interpolation: LookupMode,
    #[serde(default)]
    pub compensation_n: f64,
}

fn default_slices() -> usize {
    256
}

fn default_resolution() -> [usize; 2] {
    [256, 256]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub dims: [usize; 3],
    pub scalar_type: String,
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Busy,
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Busy => (StatusCode::SERVICE_UNAVAILABLE, "too many renders in flight".to_string()),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(serde_json::json!({ "error": msg }))).into_response()
    }
}

impl From<slicecast::Error> for ApiError {
    fn from(e: slicecast::Error) -> Self {
        match e {
            slicecast::Error::Parameter(_) | slicecast::Error::Config(_) => ApiError::BadRequest(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

pub struct AppState {
    config: ServiceConfig,
    permits: Arc<Semaphore>,
    buffers: BufferCache,
    volumes: Mutex<HashMap<String, Arc<VolumeDataset>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState {
            permits: Arc::new(Semaphore::new(config.max_concurrency)),
            buffers: BufferCache::new(config.cache_capacity),
            volumes: Mutex::new(HashMap::new()),
            config,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// Render slots; a request that finds none free gets 503.
    pub fn permits(&self) -> &Arc<Semaphore> {
        &self.permits
    }

    pub fn cached_buffers(&self) -> usize {
        self.buffers.len()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/datasets", get(datasets))
        .route("/render", post(render_frame))
        .with_state(state)
}

async fn health() -> impl IntoResponse {
    Json(serde_json::json!({ "status": "ok", "version": VERSION }))
}

/// Descriptors with a matching `.raw` file, sorted by id. Unreadable
/// descriptors are skipped with a warning.
pub fn scan_datasets(dir: &Path) -> Vec<DatasetInfo> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        warn!("data directory {} is not readable", dir.display());
        return Vec::new();
    };
    let mut out = Vec::new();
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().is_none_or(|e| e != "json") || !path.with_extension("raw").is_file() {
            continue;
        }
        let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        match VolumeDescriptor::from_json_file(&path) {
            Ok(d) => out.push(DatasetInfo {
                id: id.to_string(),
                dims: d.dims,
                scalar_type: d.scalar_type.clone(),
            }),
            Err(e) => warn!("skipping dataset {}: {e}", path.display()),
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

async fn datasets(State(state): State<Arc<AppState>>) -> Json<Vec<DatasetInfo>> {
    let dir = state.config.data_dir.clone();
    Json(tokio::task::spawn_blocking(move || scan_datasets(&dir)).await.unwrap_or_default())
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl RenderRequest {
    fn validate(&self, cfg: &ServiceConfig) -> Result<(), ApiError> {
        let [w, h] = self.settings.viewport;
        if w > cfg.max_viewport || h > cfg.max_viewport {
            return Err(ApiError::BadRequest(format!(
                "viewport {w}x{h} exceeds the {0}x{0} limit",
                cfg.max_viewport
            )));
        }
        self.settings.validate()?;
        let [bw, bh] = self.buffer_resolution;
        if self.n_slices == 0 || bw == 0 || bh == 0 {
            return Err(ApiError::BadRequest("n_slices and buffer resolution must be positive".into()));
        }
        if self.n_slices.saturating_mul(bw).saturating_mul(bh) > cfg.max_buffer_texels {
            return Err(ApiError::BadRequest("attenuation buffer too large".into()));
        }
        if !(self.compensation_n >= 0.0 && self.compensation_n.is_finite()) {
            return Err(ApiError::BadRequest("compensation_n must be non-negative".into()));
        }
        Ok(())
    }

    fn transfer_function(&self) -> Result<TransferFunction, ApiError> {
        match &self.transfer_function {
            TransferSpec::Points(p) => Ok(TransferFunction::new(p.clone())?),
            TransferSpec::Preset(name) => Ok(TransferFunction::preset(name)?),
        }
    }

    fn buffer_key(&self, tf: &TransferFunction) -> BufferKey {
        let bits = |v: [f64; 3]| v.map(f64::to_bits);
        BufferKey {
            dataset: self.dataset.clone(),
            transfer: tf
                .control_points()
                .iter()
                .flat_map(|p| std::iter::once(p.x).chain(p.rgba))
                .map(f64::to_bits)
                .collect(),
            light_dir: bits(self.settings.light.direction().into()),
            light_color: bits(self.settings.light.color),
            n_slices: self.n_slices,
            resolution: self.buffer_resolution,
            compensation: self.compensation_n.to_bits(),
            reference_spacing: self.settings.reference_spacing.to_bits(),
        }
    }
}

async fn load_volume(state: &Arc<AppState>, id: &str) -> Result<Arc<VolumeDataset>, ApiError> {
    if let Some(v) = state.volumes.lock().unwrap().get(id) {
        return Ok(v.clone());
    }
    if !valid_id(id) {
        return Err(ApiError::NotFound(format!("unknown dataset `{id}`")));
    }
    let raw = state.config.data_dir.join(format!("{id}.raw"));
    let desc = raw.with_extension("json");
    if !raw.is_file() || !desc.is_file() {
        return Err(ApiError::NotFound(format!("unknown dataset `{id}`")));
    }
    let volume = tokio::task::spawn_blocking(move || slicecast::load_raw_with_sidecar(&raw))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| ApiError::Internal(format!("loading dataset `{id}`: {e}")))?;
    let volume = Arc::new(volume);
    state.volumes.lock().unwrap().insert(id.to_string(), volume.clone());
    Ok(volume)
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

async fn render_frame(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let mut req: RenderRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("invalid request: {e}")))?;
    req.settings.lookup = req.interpolation;
    req.validate(&state.config)?;
    let tf = Arc::new(req.transfer_function()?);
    let _permit = state.permits.clone().try_acquire_owned().map_err(|_| ApiError::Busy)?;
    let volume = load_volume(&state, &req.dataset).await?;

    let mut build_ms = 0.0;
    let mut pass_count = 1;
    let buffer = if req.renderer == Renderer::Raycast && req.settings.shading.needs_buffer() {
        let key = req.buffer_key(&tf);
        let (volume, tf, settings) = (volume.clone(), tf.clone(), req.settings.clone());
        let (n, [bw, bh], comp) = (req.n_slices, req.buffer_resolution, req.compensation_n);
        let start = Instant::now();
        let (buffer, built) = state
            .buffers
            .get_or_build(&key, || async move {
                tokio::task::spawn_blocking(move || {
                    let l = settings.light.direction();
                    let camera = LightCamera::new(l, settings.light.color(), (bw, bh))?;
                    let stack = make_slice_stack(l, n)?;
                    let options = BufferOptions {
                        compensation_n: comp,
                        reference_spacing: settings.reference_spacing,
                    };
                    build_attenuation_buffer(&volume, &tf, &camera, &stack, &options)
                })
                .await
                .map_err(|e| ApiError::Internal(e.to_string()))?
                .map_err(ApiError::from)
            })
            .await?;
        if built {
            build_ms = ms(start);
        }
        pass_count = n + 1;
        Some(buffer)
    } else {
        None
    };

    let start = Instant::now();
    let renderer = req.renderer;
    let (n, [bw, bh]) = (req.n_slices, req.buffer_resolution);
    let settings = req.settings.clone();
    let (image, passes) = tokio::task::spawn_blocking(move || -> Result<_, slicecast::Error> {
        match renderer {
            Renderer::HalfAngle => {
                let out = render_half_angle(&volume, &tf, &settings, n, (bw, bh))?;
                Ok((out.image, Some(out.pass_count)))
            }
            Renderer::Raycast => Ok((render(&volume, &tf, &settings, buffer.as_deref())?, None)),
        }
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    let render_ms = ms(start);
    let png = image.encode_png()?;

    let header = |v: String| HeaderValue::from_str(&v).expect("numeric header");
    let mut resp = (StatusCode::OK, png).into_response();
    let h = resp.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("image/png"));
    h.insert("x-build-ms", header(format!("{build_ms:.3}")));
    h.insert("x-render-ms", header(format!("{render_ms:.3}")));
    h.insert("x-pass-count", header(passes.unwrap_or(pass_count).to_string()));
    Ok(resp)
}
