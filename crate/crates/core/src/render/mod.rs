//! CPU splatting rasterizer and point-cloud z-buffer.
//!
//! Gaussians are projected with the usual EWA approximation, culled to
//! their 3σ screen ellipse, sorted front to back by the camera-frame depth
//! of their center (ties by scene index) and alpha-composited per pixel in
//! 16×16 tiles. Pixel `(i, j)` samples the continuous image point
//! `(i + 0.5, j + 0.5)`. Every pixel is computed from the same ordered list
//! regardless of scheduling, so output is bit-identical across thread counts.

pub mod image;
pub mod sh;

use nalgebra::{Matrix2x3, Matrix3, Vector3};

pub use self::image::{DepthImage, RenderSidecar, RgbImage};
use crate::camera::{CameraModel, MIN_DEPTH};
use crate::error::{Error, Result};
use crate::par;
use crate::splat::{PointCloud, SplatScene};

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub tile_size: u32,
    /// Isotropic screen-space variance added to every splat, in px².
    pub dilation: f64,
    /// Mahalanobis radius beyond which a splat contributes nothing.
    pub extent_sigmas: f64,
    /// Compositing stops once transmittance falls below this.
    pub min_transmittance: f64,
    /// Depth is left at 0 where accumulated weight is below this.
    pub min_depth_weight: f64,
    /// Gaussians closer than this (camera-frame Z, meters) are culled.
    pub near: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            tile_size: 16,
            dilation: 0.3,
            extent_sigmas: 3.0,
            min_transmittance: 1e-4,
            min_depth_weight: 1e-6,
            near: 0.01,
        }
    }
}

/// Full render output; `alpha` is the accumulated weight Σ αᵢ′Tᵢ per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub rgb: RgbImage,
    pub depth: DepthImage,
    pub alpha: Vec<f32>,
}

#[derive(Debug, Clone, Copy)]
struct Splat {
    mean: [f64; 2],
    /// Inverse 2D covariance `[a, b, c]` for `[[a, b], [b, c]]`.
    conic: [f64; 3],
    opacity: f64,
    depth: f64,
    color: [f64; 3],
    /// Inclusive pixel range `[x0, y0, x1, y1]`.
    rect: [u32; 4],
    index: usize,
}

fn project_splat(
    index: usize,
    scene: &SplatScene,
    camera: &CameraModel,
    w2c: &Matrix3<f64>,
    opts: &RenderOptions,
) -> Option<Splat> {
    let g = &scene.gaussians()[index];
    if g.opacity <= 0.0 {
        return None;
    }
    let pc = w2c * (g.position - camera.pose.translation);
    if pc.z <= opts.near.max(MIN_DEPTH) {
        return None;
    }
    let k = &camera.intrinsics;
    let mean = camera.project_camera_point(&pc);

    let cov_cam = w2c * g.covariance() * w2c.transpose();
    let (x, y, z) = (pc.x, pc.y, pc.z);
    let jac = Matrix2x3::new(k.fx / z, 0.0, -k.fx * x / (z * z), 0.0, k.fy / z, -k.fy * y / (z * z));
    let cov2 = jac * cov_cam * jac.transpose();
    let (sxx, sxy, syy) = (cov2[(0, 0)] + opts.dilation, cov2[(0, 1)], cov2[(1, 1)] + opts.dilation);
    let det = sxx * syy - sxy * sxy;
    if !(det > 0.0) {
        return None;
    }
    let conic = [syy / det, -sxy / det, sxx / det];

    let hw = opts.extent_sigmas * sxx.sqrt();
    let hh = opts.extent_sigmas * syy.sqrt();
    // pixels whose centers fall inside the extent box
    let x0 = (mean.x - hw - 0.5).ceil().max(0.0);
    let y0 = (mean.y - hh - 0.5).ceil().max(0.0);
    let x1 = (mean.x + hw - 0.5).floor().min(k.width as f64 - 1.0);
    let y1 = (mean.y + hh - 0.5).floor().min(k.height as f64 - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return None;
    }

    let view_dir = (g.position - camera.pose.translation).normalize();
    let color = sh::evaluate_sh(&g.sh, &view_dir).ok()?;
    Some(Splat {
        mean: [mean.x, mean.y],
        conic,
        opacity: g.opacity,
        depth: pc.z,
        color,
        rect: [x0 as u32, y0 as u32, x1 as u32, y1 as u32],
        index,
    })
}

#[derive(Debug, Clone, Copy, Default)]
struct PixelOut {
    rgb: [f32; 3],
    depth: f32,
    alpha: f32,
}

/// Renders RGB and opacity-normalized expected depth with default options.
pub fn render_scene(scene: &SplatScene, camera: &CameraModel) -> Result<(RgbImage, DepthImage)> {
    let r = render_scene_with(scene, camera, &RenderOptions::default())?;
    Ok((r.rgb, r.depth))
}

pub fn render_scene_with(scene: &SplatScene, camera: &CameraModel, opts: &RenderOptions) -> Result<Rendered> {
    if scene.is_empty() {
        return Err(Error::EmptyScene);
    }
    camera.intrinsics.validate()?;
    let (width, height) = (camera.width(), camera.height());
    let w2c = camera.pose.world_to_camera_rotation();

    let indices: Vec<usize> = (0..scene.len()).collect();
    let mut splats: Vec<Splat> =
        par::map(&indices, |&i| project_splat(i, scene, camera, &w2c, opts)).into_iter().flatten().collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));

    let tile = opts.tile_size.max(1);
    let tiles_x = width.div_ceil(tile);
    let tiles_y = height.div_ceil(tile);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    for (rank, s) in splats.iter().enumerate() {
        let [x0, y0, x1, y1] = s.rect;
        for ty in y0 / tile..=y1 / tile {
            for tx in x0 / tile..=x1 / tile {
                bins[(ty * tiles_x + tx) as usize].push(rank as u32);
            }
        }
    }

    let mut out = vec![PixelOut::default(); width as usize * height as usize];
    let rows_per_band = (tile * width) as usize;
    par::for_each_chunk_mut(&mut out, rows_per_band, |ty, band| {
        let ty = ty as u32;
        let band_rows = band.len() as u32 / width;
        for tx in 0..tiles_x {
            let list = &bins[(ty * tiles_x + tx) as usize];
            if list.is_empty() {
                continue;
            }
            let xs = tx * tile..((tx + 1) * tile).min(width);
            for ly in 0..band_rows {
                let py = ty * tile + ly;
                for px in xs.clone() {
                    band[(ly * width + px) as usize] = composite_pixel(px, py, list, &splats, opts);
                }
            }
        }
    });

    let mut rgb = RgbImage::black(width, height);
    let mut depth = DepthImage::empty(width, height);
    let mut alpha = vec![0.0f32; out.len()];
    for (i, p) in out.into_iter().enumerate() {
        rgb.pixels[i] = p.rgb;
        depth.depth[i] = p.depth;
        alpha[i] = p.alpha;
    }
    Ok(Rendered { rgb, depth, alpha })
}

#[inline]
fn composite_pixel(px: u32, py: u32, list: &[u32], splats: &[Splat], opts: &RenderOptions) -> PixelOut {
    let (fx, fy) = (px as f64 + 0.5, py as f64 + 0.5);
    let cutoff = opts.extent_sigmas * opts.extent_sigmas;
    let mut t = 1.0f64;
    let mut color = [0.0f64; 3];
    let mut depth_sum = 0.0f64;
    let mut weight_sum = 0.0f64;
    for &rank in list {
        let s = &splats[rank as usize];
        let [x0, y0, x1, y1] = s.rect;
        if px < x0 || px > x1 || py < y0 || py > y1 {
            continue;
        }
        let dx = fx - s.mean[0];
        let dy = fy - s.mean[1];
        let [a, b, c] = s.conic;
        let m = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
        if m > cutoff {
            continue;
        }
        let alpha = s.opacity * (-0.5 * m).exp();
        let w = alpha * t;
        for ch in 0..3 {
            color[ch] += s.color[ch] * w;
        }
        depth_sum += s.depth * w;
        weight_sum += w;
        t *= 1.0 - alpha;
        if t < opts.min_transmittance {
            break;
        }
    }
    PixelOut {
        rgb: color.map(|c| c as f32),
        depth: if weight_sum < opts.min_depth_weight { 0.0 } else { (depth_sum / weight_sum) as f32 },
        alpha: weight_sum as f32,
    }
}

/// Z-buffers a point cloud, drawing each point as a filled disc of
/// `radius_px` pixels around the pixel it falls in (0 = that pixel only).
pub fn render_point_depth(cloud: &PointCloud, camera: &CameraModel, radius_px: u32) -> DepthImage {
    let (width, height) = (camera.width(), camera.height());
    let w2c = camera.pose.world_to_camera_rotation();
    let projected: Vec<Option<(i64, i64, f32)>> = par::map(&cloud.points, |p| {
        let pc = w2c * (p.position - camera.pose.translation);
        if pc.z <= MIN_DEPTH {
            return None;
        }
        let px = camera.project_camera_point(&pc);
        if !(px.x.is_finite() && px.y.is_finite()) {
            return None;
        }
        Some((px.x.floor() as i64, px.y.floor() as i64, pc.z as f32))
    });

    let r = radius_px as i64;
    let disc: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();

    let mut img = DepthImage::empty(width, height);
    for (cx, cy, z) in projected.into_iter().flatten() {
        for (dx, dy) in &disc {
            let (x, y) = (cx + dx, cy + dy);
            if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
                continue;
            }
            let d = &mut img.depth[(y as u32 * width + x as u32) as usize];
            if *d == 0.0 || z < *d {
                *d = z;
            }
        }
    }
    img
}

/// World-frame point on the principal ray at distance `depth` (for tests and tooling).
pub fn point_on_axis(camera: &CameraModel, depth: f64) -> Vector3<f64> {
    camera.pose.translation + camera.forward() * depth
}
