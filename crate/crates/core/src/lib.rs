//! Turns fruit annotations on a Gaussian-splat orchard reconstruction into
//! occlusion-aware 2D/3D pose datasets, and scores pose predictions.

pub mod annotation;
pub mod camera;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod par;
pub mod ply;
pub mod render;
pub mod splat;
pub mod synth;

pub use error::{Error, Result};
