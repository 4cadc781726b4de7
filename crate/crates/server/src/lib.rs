//! HTTP backend for the point-cloud annotation tool.
//!
//! The server holds the full-resolution scene cloud in memory and hands the
//! browser a decimated copy in chunks. Every displayed point carries its
//! index in the full cloud, so fruit selections posted back refer to the
//! full cloud and the point files written here keep full resolution.
//!
//! | route | body | response |
//! |---|---|---|
//! | `GET /api/scene/meta` | | [`SceneMeta`] |
//! | `GET /api/scene/points?chunk=i` | | [`PointChunk`] |
//! | `GET /api/annotations` | | `[AnnotationRecord]` |
//! | `POST /api/annotations` | `AnnotationRecord` | the stored record, `201` |
//! | `POST /api/annotations/{fruit_id}/points` | [`PointsRequest`] | [`PointsResponse`], `201` |
//!
//! Rejected payloads get `422` with a [`ValidationErrors`] body naming each
//! bad field. Malformed JSON gets `400`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use splatlabel::annotation::{annotation_files, points_file_name, AnnotationRecord, MIN_FRUIT_POINTS};
use splatlabel::ply::Format;
use splatlabel::splat::{read_point_cloud, write_point_cloud, PointCloud};

/// Upper bound on displayed points.
pub const DEFAULT_MAX_DISPLAY_POINTS: usize = 5_000_000;
pub const DEFAULT_CHUNK_SIZE: usize = 250_000;

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error(transparent)]
    Core(#[from] splatlabel::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid server config: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub annotations_dir: PathBuf,
    pub max_display_points: usize,
    pub chunk_size: usize,
}

impl ServerConfig {
    pub fn new(annotations_dir: impl Into<PathBuf>) -> Self {
        Self {
            annotations_dir: annotations_dir.into(),
            max_display_points: DEFAULT_MAX_DISPLAY_POINTS,
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }
}

pub struct AppState {
    cloud: PointCloud,
    /// Full-cloud index of every displayed point, ascending.
    display: Vec<usize>,
    config: ServerConfig,
    fruit_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(cloud: PointCloud, config: ServerConfig) -> Result<Self, ServerError> {
        if config.chunk_size == 0 || config.max_display_points == 0 {
            return Err(ServerError::Config("chunk size and display limit must be positive".into()));
        }
        std::fs::create_dir_all(&config.annotations_dir)
            .map_err(|source| ServerError::Io { path: config.annotations_dir.clone(), source })?;
        let display = decimate(cloud.len(), config.max_display_points);
        Ok(Self { cloud, display, config, fruit_locks: Mutex::new(HashMap::new()) })
    }

    pub fn load(cloud_path: &Path, config: ServerConfig) -> Result<Self, ServerError> {
        Self::new(read_point_cloud(cloud_path)?, config)
    }

    fn lock_for(&self, fruit_id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut map = self.fruit_locks.lock().expect("lock map poisoned");
        map.entry(fruit_id.to_string()).or_default().clone()
    }

    fn chunks(&self) -> usize {
        self.display.len().div_ceil(self.config.chunk_size)
    }
}

/// Evenly spaced indices `floor(j * n / m)`; all of `0..n` when `n <= m`.
pub fn decimate(n: usize, m: usize) -> Vec<usize> {
    if n <= m {
        return (0..n).collect();
    }
    (0..m).map(|j| ((j as u128 * n as u128) / m as u128) as usize).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub total_points: usize,
    pub display_points: usize,
    pub chunk_size: usize,
    pub chunks: usize,
    /// Absent for an empty cloud.
    pub bounds: Option<Bounds>,
    pub min_fruit_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointChunk {
    pub chunk: usize,
    /// Full-cloud index of each point.
    pub indices: Vec<usize>,
    pub positions: Vec<[f64; 3]>,
    /// RGB in `[0, 1]`.
    pub colors: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointsRequest {
    pub tree_id: String,
    /// Full-cloud indices of the fruit's points.
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointsResponse {
    pub fruit_id: String,
    pub tree_id: String,
    pub points_file: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationErrors {
    pub fruit_id: Option<String>,
    pub errors: Vec<FieldError>,
}

#[derive(Debug, Deserialize)]
struct ChunkQuery {
    chunk: usize,
}

enum ApiError {
    BadRequest(String),
    NotFound(String),
    Invalid(ValidationErrors),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let message = |status: StatusCode, m: String| (status, Json(serde_json::json!({ "error": m }))).into_response();
        match self {
            ApiError::BadRequest(m) => message(StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => message(StatusCode::NOT_FOUND, m),
            ApiError::Internal(m) => message(StatusCode::INTERNAL_SERVER_ERROR, m),
            ApiError::Invalid(v) => (StatusCode::UNPROCESSABLE_ENTITY, Json(v)).into_response(),
        }
    }
}

impl From<splatlabel::Error> for ApiError {
    fn from(e: splatlabel::Error) -> Self {
        ApiError::Internal(e.to_string())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/scene/meta", get(scene_meta))
        .route("/api/scene/points", get(scene_points))
        .route("/api/annotations", get(list_annotations).post(save_annotation))
        .route("/api/annotations/{fruit_id}/points", post(save_points))
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: AppState, addr: SocketAddr) -> Result<(), ServerError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServerError::Io { path: PathBuf::from(addr.to_string()), source })?;
    axum::serve(listener, router(Arc::new(state)))
        .await
        .map_err(|source| ServerError::Io { path: PathBuf::from(addr.to_string()), source })
}

async fn scene_meta(State(s): State<Arc<AppState>>) -> Json<SceneMeta> {
    let bounds = (!s.cloud.is_empty()).then(|| {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in &s.cloud.points {
            for k in 0..3 {
                min[k] = min[k].min(p.position[k]);
                max[k] = max[k].max(p.position[k]);
            }
        }
        Bounds { min, max }
    });
    Json(SceneMeta {
        total_points: s.cloud.len(),
        display_points: s.display.len(),
        chunk_size: s.config.chunk_size,
        chunks: s.chunks(),
        bounds,
        min_fruit_points: MIN_FRUIT_POINTS,
    })
}

async fn scene_points(
    State(s): State<Arc<AppState>>,
    Query(q): Query<ChunkQuery>,
) -> Result<Json<PointChunk>, ApiError> {
    if q.chunk >= s.chunks() {
        return Err(ApiError::NotFound(format!("chunk {} of {}", q.chunk, s.chunks())));
    }
    let start = q.chunk * s.config.chunk_size;
    let end = (start + s.config.chunk_size).min(s.display.len());
    let indices = s.display[start..end].to_vec();
    let points = indices.iter().map(|&i| &s.cloud.points[i]);
    Ok(Json(PointChunk {
        chunk: q.chunk,
        positions: points.clone().map(|p| p.position.into()).collect(),
        colors: points.map(|p| p.color).collect(),
        indices,
    }))
}

async fn list_annotations(State(s): State<Arc<AppState>>) -> Result<Json<Vec<AnnotationRecord>>, ApiError> {
    let records = annotation_files(&s.config.annotations_dir)?
        .iter()
        .map(|p| AnnotationRecord::load(p))
        .collect::<splatlabel::Result<Vec<_>>>()?;
    Ok(Json(records))
}

fn valid_id(id: &str) -> Result<(), String> {
    if id.is_empty() {
        return Err("must not be empty".into());
    }
    if id.starts_with('.') || !id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')) {
        return Err("only letters, digits, '_', '-' and '.' allowed, not leading '.'".into());
    }
    Ok(())
}

struct Checker {
    errors: Vec<FieldError>,
}

impl Checker {
    fn check(&mut self, field: &str, r: Result<(), String>) {
        if let Err(message) = r {
            self.errors.push(FieldError { field: field.into(), message });
        }
    }

    fn finish(self, fruit_id: Option<&str>) -> Result<(), ApiError> {
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(ApiError::Invalid(ValidationErrors { fruit_id: fruit_id.map(str::to_string), errors: self.errors }))
        }
    }
}

fn check_indices(indices: &[usize], total: usize) -> Result<(), String> {
    if indices.len() < MIN_FRUIT_POINTS {
        return Err(format!("{} points, at least {MIN_FRUIT_POINTS} required", indices.len()));
    }
    if let Some(bad) = indices.iter().find(|&&i| i >= total) {
        return Err(format!("index {bad} outside the {total}-point cloud"));
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err("indices must be unique".into());
    }
    Ok(())
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let value: serde_json::Value = serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    serde_json::from_value(value).map_err(|e| {
        ApiError::Invalid(ValidationErrors {
            fruit_id: None,
            errors: vec![FieldError { field: "body".into(), message: e.to_string() }],
        })
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ApiError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))
}

async fn save_points(
    State(s): State<Arc<AppState>>,
    UrlPath(fruit_id): UrlPath<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<PointsResponse>), ApiError> {
    let req: PointsRequest = parse_body(&body)?;
    let mut c = Checker { errors: Vec::new() };
    c.check("fruit_id", valid_id(&fruit_id));
    c.check("tree_id", valid_id(&req.tree_id));
    c.check("indices", check_indices(&req.indices, s.cloud.len()));
    c.finish(Some(&fruit_id))?;

    let cloud = s.cloud.select(&req.indices).expect("indices checked");
    let points_file = points_file_name(&req.tree_id, &fruit_id);
    let lock = s.lock_for(&fruit_id);
    let _guard = lock.lock().await;
    write_atomic(&s.config.annotations_dir.join(&points_file), &write_point_cloud(&cloud, Format::BinaryLittleEndian))?;
    Ok((StatusCode::CREATED, Json(PointsResponse { fruit_id, tree_id: req.tree_id, points_file, count: cloud.len() })))
}

async fn save_annotation(
    State(s): State<Arc<AppState>>,
    body: Bytes,
) -> Result<(StatusCode, Json<AnnotationRecord>), ApiError> {
    let rec: AnnotationRecord = parse_body(&body)?;
    let dir = &s.config.annotations_dir;
    let mut c = Checker { errors: Vec::new() };
    c.check("fruit_id", valid_id(&rec.fruit_id));
    c.check("tree_id", valid_id(&rec.tree_id));
    c.check(
        "calyx",
        if rec.calyx.iter().all(|v| v.is_finite()) { Ok(()) } else { Err("non-finite coordinate".into()) },
    );
    c.check(
        "points_file",
        match valid_id(&rec.points_file) {
            Err(e) => Err(e),
            Ok(()) if !dir.join(&rec.points_file).is_file() => {
                Err(format!("{} not found; post the points first", rec.points_file))
            }
            Ok(()) => Ok(()),
        },
    );
    if let Some(indices) = &rec.point_indices {
        c.check("point_indices", check_indices(indices, s.cloud.len()));
    }
    if let Some(ci) = rec.calyx_index {
        let r = match s.cloud.points.get(ci) {
            None => Err(format!("index {ci} outside the {}-point cloud", s.cloud.len())),
            Some(_) if rec.point_indices.as_ref().is_some_and(|ix| !ix.contains(&ci)) => {
                Err("calyx point is not part of the selection".into())
            }
            Some(p) if (0..3).any(|k| (p.position[k] - rec.calyx[k]).abs() > 1e-6) => {
                Err("calyx does not match the point at calyx_index".into())
            }
            Some(_) => Ok(()),
        };
        c.check("calyx_index", r);
    }
    c.finish(Some(&rec.fruit_id))?;

    let lock = s.lock_for(&rec.fruit_id);
    let _guard = lock.lock().await;
    if let Err(e) = rec.resolve(dir) {
        let mut c = Checker { errors: Vec::new() };
        c.check("points_file", Err(e.to_string()));
        c.finish(Some(&rec.fruit_id))?;
    }
    let text = serde_json::to_vec_pretty(&rec).map_err(|e| ApiError::Internal(e.to_string()))?;
    write_atomic(&dir.join(format!("{}.json", rec.fruit_id)), &text)?;
    Ok((StatusCode::CREATED, Json(rec)))
}
