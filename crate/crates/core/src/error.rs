use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed PLY header: {0}")]
    PlyHeader(String),

    #[error("PLY is missing required property `{0}`")]
    MissingProperty(String),

    #[error("non-finite value in property `{property}` at vertex {vertex}")]
    NonFinite { property: String, vertex: usize },

    #[error("PLY body truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("scene is empty")]
    EmptyScene,

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("patch size {patch} exceeds image size {width}x{height}")]
    PatchTooLarge { patch: u32, width: u32, height: u32 },

    #[error("unsupported spherical-harmonics coefficient count {0} (degree 0..=3 expected)")]
    UnsupportedShDegree(usize),

    #[error("invalid annotation `{fruit_id}`: {reason}")]
    InvalidAnnotation { fruit_id: String, reason: String },

    #[error("calyx coincides with the fruit centroid for `{0}`")]
    DegenerateAxis(String),

    #[error("fruit `{fruit_id}` is not visible in camera `{camera_id}`")]
    NotVisible { fruit_id: String, camera_id: String },

    #[error("image size mismatch: {0}")]
    SizeMismatch(String),

    #[error("degenerate oriented box (volume {0:e})")]
    DegenerateBox(f64),

    #[error("filtered ground truth is not a subset of the full set: {0}")]
    NotSubset(String),

    #[error("zero-length vector")]
    ZeroVector,

    #[error("occlusion rate {0} outside [0, 100]")]
    OcclusionOutOfRange(f64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("subsample target {target} exceeds available label count {available}")]
    TargetTooLarge { target: usize, available: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}
