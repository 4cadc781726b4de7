use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::camera::PatchRect;
use crate::error::{Error, Result};

/// Depth PNGs store millimeters; this is the largest representable value.
pub const DEPTH_PNG_MAX_MM: f64 = 65_535.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB in `[0, 1]`.
    pub pixels: Vec<[f32; 3]>,
}

impl RgbImage {
    pub fn black(width: u32, height: u32) -> Self {
        Self { width, height, pixels: vec![[0.0; 3]; width as usize * height as usize] }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [f32; 3] {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn crop(&self, r: &PatchRect) -> RgbImage {
        RgbImage { width: r.width, height: r.height, pixels: crop_rows(&self.pixels, self.width, r) }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_fn(self.width, self.height, |x, y| {
            Rgb(self.get(x, y).map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
        });
        buf.save(path).map_err(|source| Error::Image { path: path.into(), source })
    }

    /// Loads any 8-bit image the `image` crate understands (PNG, JPEG).
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?.to_rgb8();
        Ok(Self {
            width: img.width(),
            height: img.height(),
            pixels: img.pixels().map(|p| p.0.map(|c| c as f32 / 255.0)).collect(),
        })
    }
}

/// Per-pixel depth in meters; `0` means no content.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f32>,
}

impl DepthImage {
    pub fn empty(width: u32, height: u32) -> Self {
        Self { width, height, depth: vec![0.0; width as usize * height as usize] }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.depth[(y * self.width + x) as usize]
    }

    pub fn count_nonzero(&self) -> usize {
        self.depth.iter().filter(|d| **d > 0.0).count()
    }

    pub fn crop(&self, r: &PatchRect) -> DepthImage {
        DepthImage { width: r.width, height: r.height, depth: crop_rows(&self.depth, self.width, r) }
    }

    /// 16-bit grayscale PNG in millimeters, clamped at 65,535.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(self.width, self.height, |x, y| {
            let mm = (self.get(x, y) as f64 * 1000.0).round().clamp(0.0, DEPTH_PNG_MAX_MM);
            Luma([mm as u16])
        });
        buf.save(path).map_err(|source| Error::Image { path: path.into(), source })
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?.to_luma16();
        Ok(Self {
            width: img.width(),
            height: img.height(),
            depth: img.pixels().map(|p| p.0[0] as f32 / 1000.0).collect(),
        })
    }
}

fn crop_rows<T: Copy>(data: &[T], stride: u32, r: &PatchRect) -> Vec<T> {
    let mut out = Vec::with_capacity(r.width as usize * r.height as usize);
    for y in r.y..r.y + r.height {
        let start = (y * stride + r.x) as usize;
        out.extend_from_slice(&data[start..start + r.width as usize]);
    }
    out
}

/// JSON written next to every rendered image pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSidecar {
    pub camera_id: String,
    pub width: u32,
    pub height: u32,
    pub sh_degree: usize,
    pub depth_units: String,
    pub camera_convention: String,
}

impl RenderSidecar {
    pub fn new(camera_id: &str, width: u32, height: u32, sh_degree: usize) -> Self {
        Self {
            camera_id: camera_id.to_string(),
            width,
            height,
            sh_degree,
            depth_units: "millimeters".into(),
            camera_convention: crate::camera::CAMERA_CONVENTION.into(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
