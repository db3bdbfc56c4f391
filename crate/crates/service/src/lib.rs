//! HTTP session service for interactive segmentation.
//!
//! A client uploads an image, posts scribble strokes (which accumulate in the
//! session) and asks for a segmentation. Superpixels and the bilateral grid
//! depend only on the image and their parameters, so a session keeps them
//! between runs and rebuilds them only when those parameters change.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/sessions` | multipart, field `image` (PNG/PPM) | `{id, width, height}` |
//! | POST | `/sessions/{id}/scribbles` | `{strokes: [{label, points, radius}]}` | `{fg, bg}` |
//! | POST | `/sessions/{id}/segment` | config overrides (JSON object, may be empty) | `{stats, mask_png_base64, config}` |
//! | GET | `/sessions/{id}/mask` | | latest mask as PNG |
//! | DELETE | `/sessions/{id}` | | 204 |
//!
//! Errors are `{error, message}` with a status code: 400 undecodable image,
//! 404 unknown or expired session, 409 missing seeds, 413 image too large,
//! 422 malformed strokes or config, 500 solver failure.

mod session;
pub mod strokes;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use geoseg::image::{decode_image, probe_dimensions};
use geoseg::segmenter::{config_echo, SolverConfig};
use serde_json::{json, Map, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};
use uuid::Uuid;

pub use session::{RunStats, Session};
use strokes::{rasterize, StrokeBatch};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_pixels: usize,
    pub idle_timeout: Duration,
    /// Reuse superpixels and grids between runs of a session.
    pub cache_enabled: bool,
    /// `None` allows any origin.
    pub cors_origin: Option<String>,
    /// Upload size cap in bytes.
    pub max_body_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_pixels: 16_000_000,
            idle_timeout: Duration::from_secs(30 * 60),
            cache_enabled: true,
            cors_origin: None,
            max_body_bytes: 128 * 1024 * 1024,
        }
    }
}

type SessionHandle = Arc<tokio::sync::Mutex<Session>>;

/// Shared state: the session table. Each session has its own lock, so work
/// on one session never blocks another.
#[derive(Clone)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<Uuid, SessionHandle>>>,
    config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            sessions: Arc::default(),
            config: Arc::new(config),
        }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    /// Drops sessions idle for longer than the timeout; returns how many.
    /// Sessions busy with a request are skipped.
    pub fn purge_expired(&self) -> usize {
        let timeout = self.config.idle_timeout;
        let mut table = self.sessions.lock().unwrap();
        let before = table.len();
        table.retain(|_, s| match s.try_lock() {
            Ok(s) => s.last_used.elapsed() <= timeout,
            Err(_) => true,
        });
        before - table.len()
    }

    fn lookup(&self, id: &str) -> Result<SessionHandle, ApiError> {
        let unknown = || ApiError::new(StatusCode::NOT_FOUND, "UnknownSession", format!("no session {id}"));
        let id = Uuid::parse_str(id).map_err(|_| unknown())?;
        self.sessions.lock().unwrap().get(&id).cloned().ok_or_else(unknown)
    }

    /// Locks a session and marks it used, or reports it gone if it expired
    /// while idle.
    async fn acquire(&self, id: &str) -> Result<tokio::sync::OwnedMutexGuard<Session>, ApiError> {
        let handle = self.lookup(id)?;
        let mut guard = handle.lock_owned().await;
        if guard.last_used.elapsed() > self.config.idle_timeout {
            if let Ok(uuid) = Uuid::parse_str(id) {
                self.sessions.lock().unwrap().remove(&uuid);
            }
            return Err(ApiError::new(StatusCode::NOT_FOUND, "UnknownSession", format!("session {id} expired")));
        }
        guard.last_used = Instant::now();
        Ok(guard)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.into(),
        }
    }
}

impl From<geoseg::Error> for ApiError {
    fn from(e: geoseg::Error) -> Self {
        let status = match e.code() {
            "UnsupportedFormat" | "CorruptImage" => StatusCode::BAD_REQUEST,
            "MissingSeeds" | "DegenerateSeeds" => StatusCode::CONFLICT,
            "InvalidConfig" | "InvalidParameter" => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

async fn create_session(State(state): State<AppState>, mut multipart: Multipart) -> Result<Json<Value>, ApiError> {
    let bad = |m: String| ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", m);
    let mut bytes = None;
    while let Some(field) = multipart.next_field().await.map_err(|e| bad(e.to_string()))? {
        if field.name() == Some("image") || field.file_name().is_some() {
            bytes = Some(field.bytes().await.map_err(|e| bad(e.to_string()))?);
            break;
        }
    }
    let bytes = bytes.ok_or_else(|| bad("multipart field \"image\" is missing".into()))?;
    let (w, h) = probe_dimensions(&bytes)?;
    if w * h > state.config.max_pixels {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "TooLarge",
            format!("{w}x{h} exceeds the {} pixel limit", state.config.max_pixels),
        ));
    }
    let image = tokio::task::spawn_blocking(move || decode_image(&bytes))
        .await
        .expect("decoder does not panic")?;
    let (width, height) = (image.width(), image.height());
    let id = Uuid::new_v4();
    state
        .sessions
        .lock()
        .unwrap()
        .insert(id, Arc::new(tokio::sync::Mutex::new(Session::new(image))));
    Ok(Json(json!({ "id": id.to_string(), "width": width, "height": height })))
}

async fn apply_scribbles(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let malformed = |m: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "MalformedStroke", m);
    let batch: StrokeBatch = serde_json::from_slice(&body).map_err(|e| malformed(e.to_string()))?;
    for (i, s) in batch.strokes.iter().enumerate() {
        s.validate().map_err(|m| malformed(format!("stroke {i}: {m}")))?;
    }
    let mut session = state.acquire(&id).await?;
    for s in &batch.strokes {
        rasterize(s, &mut session.scribbles);
    }
    let (fg, bg) = session.scribbles.seed_counts();
    Ok(Json(json!({ "fg": fg, "bg": bg })))
}

async fn run_segmentation(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let overrides: Map<String, Value> = if body.iter().all(u8::is_ascii_whitespace) {
        Map::new()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidConfig", e.to_string()))?
    };
    let cfg = SolverConfig::default().merged(&overrides)?;
    let mut session = state.acquire(&id).await?;
    let use_cache = state.config.cache_enabled;
    let run_cfg = cfg.clone();
    let out = tokio::task::spawn_blocking(move || {
        let out = session.run(&run_cfg, use_cache);
        session.last_used = Instant::now();
        out
    })
    .await
    .expect("segmentation does not panic")?;
    let mask = base64::engine::general_purpose::STANDARD.encode(&out.mask_png);
    Ok(Json(json!({
        "stats": out.stats,
        "mask_png_base64": mask,
        "config": config_echo(&cfg),
    })))
}

async fn get_mask(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = state.acquire(&id).await?;
    let png = session
        .last_mask
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NoMask", "session has not been segmented yet"))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    state.lookup(&id)?;
    let uuid = Uuid::parse_str(&id).expect("lookup validated the id");
    state.sessions.lock().unwrap().remove(&uuid);
    Ok(StatusCode::NO_CONTENT)
}

pub fn router(state: AppState) -> Router {
    let origin = match &state.config.cors_origin {
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o).expect("valid origin header")),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods(tower_http::cors::Any)
        .allow_headers(tower_http::cors::Any);
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/scribbles", post(apply_scribbles))
        .route("/sessions/{id}/segment", post(run_segmentation))
        .route("/sessions/{id}/mask", get(get_mask))
        .layer(DefaultBodyLimit::max(state.config.max_body_bytes))
        .layer(cors)
        .with_state(state)
}

/// Purges expired sessions every `period` until the runtime shuts down.
pub fn spawn_reaper(state: AppState, period: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            state.purge_expired();
        }
    })
}
