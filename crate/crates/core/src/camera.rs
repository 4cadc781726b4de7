//! Pinhole camera model, image patching and orbit trajectories.
//!
//! Camera frame: +Z forward, +X right, +Y down. A pose stores the
//! camera-to-world rotation and the camera center in world coordinates.

use std::path::Path;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Written into every camera record.
pub const CAMERA_CONVENTION: &str = "z-forward,y-down";

/// Points closer than this (camera-frame Z) cannot be projected.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::Config(format!("invalid focal/principal point in {self:?}")));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image size must be at least 1x1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    /// Camera-to-world rotation.
    pub rotation: UnitQuaternion<f64>,
    /// Camera center in world coordinates.
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn identity() -> Self {
        Self { rotation: UnitQuaternion::identity(), translation: Vector3::zeros() }
    }

    /// Rotation taking world vectors into the camera frame.
    pub fn world_to_camera_rotation(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner().transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub id: String,
    pub intrinsics: Intrinsics,
    pub pose: CameraPose,
}

impl CameraModel {
    pub fn new(id: impl Into<String>, intrinsics: Intrinsics, pose: CameraPose) -> Self {
        Self { id: id.into(), intrinsics, pose }
    }

    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.pose.rotation.inverse_transform_vector(&(p - self.pose.translation))
    }

    /// Projects a camera-frame point; no depth check.
    #[inline]
    pub fn project_camera_point(&self, pc: &Vector3<f64>) -> Vector2<f64> {
        let k = &self.intrinsics;
        Vector2::new(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy)
    }

    /// Pixel coordinates and camera-frame depth of a world point.
    pub fn project_point(&self, world: &Vector3<f64>) -> Result<(Vector2<f64>, f64)> {
        let pc = self.world_to_camera(world);
        if pc.z <= MIN_DEPTH {
            return Err(Error::BehindCamera { z: pc.z });
        }
        Ok((self.project_camera_point(&pc), pc.z))
    }

    /// True when the point is in front of the camera and projects inside the image.
    pub fn sees(&self, world: &Vector3<f64>) -> bool {
        match self.project_point(world) {
            Ok((px, _)) => {
                px.x >= 0.0
                    && px.y >= 0.0
                    && px.x < self.intrinsics.width as f64
                    && px.y < self.intrinsics.height as f64
            }
            Err(_) => false,
        }
    }

    /// World-space unit direction of the principal ray.
    pub fn forward(&self) -> Vector3<f64> {
        self.pose.rotation * Vector3::z()
    }
}

/// A `width x height` window at `(x, y)` of a larger image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRect {
    pub row: u32,
    pub col: u32,
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl PatchRect {
    pub fn contains_pixel(&self, px: u32, py: u32) -> bool {
        px >= self.x && py >= self.y && px < self.x + self.width && py < self.y + self.height
    }
}

fn patch_origins(extent: u32, patch: u32) -> Vec<u32> {
    let n = extent.div_ceil(patch);
    if n <= 1 {
        return vec![0];
    }
    let span = (extent - patch) as f64;
    (0..n).map(|i| (i as f64 * span / (n - 1) as f64).round() as u32).collect()
}

/// Tiles an image with square patches whose overlap is spread uniformly.
///
/// Patches are returned row by row. The first patch sits at the origin and
/// the last one is flush with the far corner.
pub fn generate_patch_grid(width: u32, height: u32, patch: u32) -> Result<Vec<PatchRect>> {
    if patch == 0 || patch > width || patch > height {
        return Err(Error::PatchTooLarge { patch, width, height });
    }
    let xs = patch_origins(width, patch);
    let ys = patch_origins(height, patch);
    let mut rects = Vec::with_capacity(xs.len() * ys.len());
    for (row, &y) in ys.iter().enumerate() {
        for (col, &x) in xs.iter().enumerate() {
            rects.push(PatchRect { row: row as u32, col: col as u32, x, y, width: patch, height: patch });
        }
    }
    Ok(rects)
}

/// Camera for a patch: principal point shifted by the patch origin.
pub fn patch_camera(camera: &CameraModel, rect: &PatchRect) -> CameraModel {
    let k = camera.intrinsics;
    CameraModel {
        id: format!("{}_r{}c{}", camera.id, rect.row, rect.col),
        intrinsics: Intrinsics {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx - rect.x as f64,
            cy: k.cy - rect.y as f64,
            width: rect.width,
            height: rect.height,
        },
        pose: camera.pose,
    }
}

/// One swept setting of a trajectory: `steps` values across `range`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub steps: usize,
    pub range: [f64; 2],
    /// Include `range[1]` as the last value. Full-turn sweeps set this to
    /// false so that 0 and 2π are not both emitted.
    #[serde(default = "default_true")]
    pub endpoint: bool,
}

fn default_true() -> bool {
    true
}

impl Sweep {
    pub fn inclusive(steps: usize, min: f64, max: f64) -> Self {
        Self { steps, range: [min, max], endpoint: true }
    }

    pub fn full_turn(steps: usize) -> Self {
        Self { steps, range: [0.0, std::f64::consts::TAU], endpoint: false }
    }

    pub fn fixed(value: f64) -> Self {
        Self::inclusive(1, value, value)
    }

    pub fn values(&self) -> Vec<f64> {
        let [lo, hi] = self.range;
        if self.steps == 1 {
            return vec![lo];
        }
        let div = if self.endpoint { self.steps - 1 } else { self.steps } as f64;
        (0..self.steps).map(|i| lo + (hi - lo) * i as f64 / div).collect()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config(format!("{name}: steps must be >= 1")));
        }
        if !(self.range[0] <= self.range[1]) {
            return Err(Error::Config(format!("{name}: range min exceeds max")));
        }
        Ok(())
    }
}

/// Orbit settings around a tree; heights/distances in meters, angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub height: Sweep,
    pub roll: Sweep,
    pub pitch: Sweep,
    pub yaw: Sweep,
    pub distance: Sweep,
    pub tree_origin: [f64; 3],
    /// Intrinsics for rendered views, when the file carries them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<Intrinsics>,
}

impl TrajectoryConfig {
    /// The orchard rendering grid: 3 heights, 7 rolls, 3 pitches, 32 yaws, 2 distances.
    pub fn orchard_default(tree_origin: [f64; 3]) -> Self {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
        Self {
            height: Sweep::inclusive(3, -0.5, 0.7),
            roll: Sweep::inclusive(7, -FRAC_PI_2, FRAC_PI_2),
            pitch: Sweep::inclusive(3, -FRAC_PI_4, FRAC_PI_4),
            yaw: Sweep::full_turn(32),
            distance: Sweep::inclusive(2, 2.7, 3.2),
            tree_origin,
            intrinsics: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.height.validate("height")?;
        self.roll.validate("roll")?;
        self.pitch.validate("pitch")?;
        self.yaw.validate("yaw")?;
        self.distance.validate("distance")
    }

    pub fn pose_count(&self) -> usize {
        self.height.steps * self.roll.steps * self.pitch.steps * self.yaw.steps * self.distance.steps
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Settings that produced a trajectory pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitSetting {
    pub height: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub distance: f64,
}

/// Maps the orbit body frame (X toward the tree, Y left, Z up) to the camera frame.
fn body_to_camera_axes() -> Matrix3<f64> {
    // columns: camera X (right), Y (down), Z (forward) in body coordinates
    Matrix3::new(
        0.0, 0.0, 1.0, //
        -1.0, 0.0, 0.0, //
        0.0, -1.0, 0.0,
    )
}

/// Pose for one orbit setting around `origin`.
///
/// Raise by `height` along world Z, orient with `Rz(yaw) * Ry(pitch) * Rx(roll)`,
/// then back off by `distance` along the rotated X-axis.
pub fn orbit_pose(origin: &Vector3<f64>, s: &OrbitSetting) -> CameraPose {
    let body = Rotation3::from_axis_angle(&Vector3::z_axis(), s.yaw)
        * Rotation3::from_axis_angle(&Vector3::y_axis(), s.pitch)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), s.roll);
    let pivot = origin + Vector3::new(0.0, 0.0, s.height);
    let center = pivot - s.distance * (body * Vector3::x());
    let cam_to_world = body.into_inner() * body_to_camera_axes();
    CameraPose {
        rotation: UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(cam_to_world)),
        translation: center,
    }
}

/// Enumerates height × roll × pitch × yaw × distance in that nesting order.
pub fn generate_trajectory(config: &TrajectoryConfig) -> Result<Vec<(OrbitSetting, CameraPose)>> {
    config.validate()?;
    let origin = Vector3::from(config.tree_origin);
    let (hs, rs, ps, ys, ds) = (
        config.height.values(),
        config.roll.values(),
        config.pitch.values(),
        config.yaw.values(),
        config.distance.values(),
    );
    let mut out = Vec::with_capacity(config.pose_count());
    for &height in &hs {
        for &roll in &rs {
            for &pitch in &ps {
                for &yaw in &ys {
                    for &distance in &ds {
                        let s = OrbitSetting { height, roll, pitch, yaw, distance };
                        out.push((s, orbit_pose(&origin, &s)));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Trajectory poses as cameras named `{prefix}_{index:05}`.
pub fn trajectory_cameras(config: &TrajectoryConfig, intrinsics: Intrinsics, prefix: &str) -> Result<Vec<CameraModel>> {
    Ok(generate_trajectory(config)?
        .into_iter()
        .enumerate()
        .map(|(i, (_, pose))| CameraModel::new(format!("{prefix}_{i:05}"), intrinsics, pose))
        .collect())
}

/// One entry of a camera file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Camera-to-world rotation `[w, x, y, z]`.
    pub q: [f64; 4],
    /// Camera center `[x, y, z]`.
    pub t: [f64; 3],
    #[serde(default = "default_convention")]
    pub convention: String,
}

fn default_convention() -> String {
    CAMERA_CONVENTION.to_string()
}

impl From<&CameraModel> for CameraRecord {
    fn from(c: &CameraModel) -> Self {
        let q = c.pose.rotation.quaternion();
        let k = c.intrinsics;
        Self {
            id: c.id.clone(),
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            q: [q.w, q.i, q.j, q.k],
            t: c.pose.translation.into(),
            convention: CAMERA_CONVENTION.into(),
        }
    }
}

impl TryFrom<CameraRecord> for CameraModel {
    type Error = Error;

    fn try_from(r: CameraRecord) -> Result<Self> {
        if r.convention != CAMERA_CONVENTION {
            return Err(Error::Config(format!(
                "camera `{}` uses convention `{}`, expected `{CAMERA_CONVENTION}`",
                r.id, r.convention
            )));
        }
        let q = nalgebra::Quaternion::new(r.q[0], r.q[1], r.q[2], r.q[3]);
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("camera `{}` quaternion is not unit", r.id)));
        }
        Ok(CameraModel {
            intrinsics: Intrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)?,
            pose: CameraPose { rotation: UnitQuaternion::from_quaternion(q), translation: Vector3::from(r.t) },
            id: r.id,
        })
    }
}

pub fn load_cameras(path: &Path) -> Result<Vec<CameraModel>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<CameraRecord> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    records.into_iter().map(CameraModel::try_from).collect()
}

pub fn save_cameras(path: &Path, cameras: &[CameraModel]) -> Result<()> {
    let records: Vec<CameraRecord> = cameras.iter().map(CameraRecord::from).collect();
    let text = serde_json::to_string_pretty(&records).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(fx: f64, c: f64, w: u32, h: u32) -> CameraModel {
        CameraModel::new("c", Intrinsics::new(fx, fx, c, c, w, h).unwrap(), CameraPose::identity())
    }

    #[test]
    fn on_axis_and_offset_projection() {
        let c = cam(1000.0, 650.0, 1300, 1300);
        let (px, z) = c.project_point(&Vector3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((px.x, px.y, z), (650.0, 650.0, 2.0));
        let (px, _) = c.project_point(&Vector3::new(0.1, 0.0, 2.0)).unwrap();
        assert!((px.x - 700.0).abs() < 1e-12 && px.y == 650.0);
    }

    #[test]
    fn behind_camera_rejected() {
        let c = cam(1000.0, 650.0, 1300, 1300);
        assert!(matches!(c.project_point(&Vector3::new(0.0, 0.0, -1.0)), Err(Error::BehindCamera { .. })));
    }

    #[test]
    fn patch_grid_single_patch() {
        let g = generate_patch_grid(1300, 1300, 1300).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!((g[0].x, g[0].y), (0, 0));
    }

    #[test]
    fn patch_grid_rejects_oversized_patch() {
        assert!(generate_patch_grid(1000, 2000, 1300).is_err());
        assert!(generate_patch_grid(2000, 1000, 1300).is_err());
    }

    #[test]
    fn patch_camera_shifts_principal_point() {
        let mut c = cam(1000.0, 0.0, 6048, 4024);
        c.intrinsics.cx = 3024.0;
        let rect = PatchRect { row: 0, col: 1, x: 1187, y: 0, width: 1300, height: 1300 };
        let p = patch_camera(&c, &rect);
        assert_eq!(p.intrinsics.cx, 1837.0);
        assert_eq!(p.intrinsics.fx, c.intrinsics.fx);
        assert_eq!(p.pose, c.pose);
        let origin = PatchRect { row: 0, col: 0, x: 0, y: 0, width: 1300, height: 1300 };
        let p0 = patch_camera(&c, &origin);
        assert_eq!((p0.intrinsics.cx, p0.intrinsics.cy), (c.intrinsics.cx, c.intrinsics.cy));
        assert_eq!((p0.intrinsics.width, p0.intrinsics.height), (1300, 1300));
    }

    #[test]
    fn single_step_orbit_backs_off_along_x() {
        let origin = [1.0, 2.0, 3.0];
        let cfg = TrajectoryConfig {
            height: Sweep::fixed(0.0),
            roll: Sweep::fixed(0.0),
            pitch: Sweep::fixed(0.0),
            yaw: Sweep::fixed(0.0),
            distance: Sweep::fixed(2.5),
            tree_origin: origin,
            intrinsics: None,
        };
        let poses = generate_trajectory(&cfg).unwrap();
        assert_eq!(poses.len(), 1);
        let c = poses[0].1.translation;
        assert!((c - Vector3::new(-1.5, 2.0, 3.0)).norm() < 1e-12);
        // camera looks along +X toward the tree, image Y points down
        let cam = CameraModel::new("t", Intrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap(), poses[0].1);
        assert!((cam.forward() - Vector3::x()).norm() < 1e-12);
        let (px, z) = cam.project_point(&Vector3::new(1.0, 2.0, 3.5)).unwrap();
        assert!((z - 2.5).abs() < 1e-12);
        assert!(px.y < 50.0, "a point above the tree must appear in the upper half");
    }

    #[test]
    fn sweep_values() {
        assert_eq!(Sweep::inclusive(3, -0.5, 0.7).values().len(), 3);
        assert_eq!(Sweep::inclusive(1, 2.7, 3.2).values(), vec![2.7]);
        let yaw = Sweep::full_turn(4).values();
        assert!((yaw[3] - 1.5 * std::f64::consts::PI).abs() < 1e-12);
        let bad =
            TrajectoryConfig { height: Sweep::inclusive(0, 0.0, 1.0), ..TrajectoryConfig::orchard_default([0.0; 3]) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn camera_record_round_trip() {
        let origin = Vector3::new(0.3, -0.2, 1.0);
        let pose = orbit_pose(&origin, &OrbitSetting { height: 0.2, roll: 0.3, pitch: -0.4, yaw: 1.1, distance: 3.0 });
        let c = CameraModel::new("x", Intrinsics::new(900.0, 910.0, 640.0, 360.0, 1280, 720).unwrap(), pose);
        let back = CameraModel::try_from(CameraRecord::from(&c)).unwrap();
        assert_eq!(back.intrinsics, c.intrinsics);
        assert!(back.pose.rotation.angle_to(&c.pose.rotation) < 1e-12);
        let mut r = CameraRecord::from(&c);
        r.convention = "y-up".into();
        assert!(CameraModel::try_from(r).is_err());
    }
}
