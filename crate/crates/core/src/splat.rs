//! In-memory 3D Gaussian scene: loading, cropping and point sampling.
//!
//! Splat files use the usual 3DGS vertex layout (`x y z`, `opacity` logit,
//! `scale_0..2` log-scale, `rot_0..3` quaternion `w x y z`, `f_dc_0..2`,
//! optional `f_rest_*` stored channel-major). Activations are applied on
//! load, so nothing downstream ever sees a logit or log-scale.

use std::path::Path;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ply::{self, Format, ScalarType};
use crate::render::sh;

/// One anisotropic Gaussian, activated.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D {
    pub position: Vector3<f64>,
    /// Opacity in `[0, 1]`.
    pub opacity: f64,
    /// Per-axis standard deviation in meters.
    pub scale: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    /// RGB spherical-harmonics coefficients, DC term first.
    pub sh: Vec<[f64; 3]>,
}

impl Gaussian3D {
    /// Degree-0 Gaussian with the given DC coefficients.
    pub fn new(
        position: Vector3<f64>,
        opacity: f64,
        scale: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
        dc: [f64; 3],
    ) -> Self {
        Self { position, opacity, scale, rotation, sh: vec![dc] }
    }

    /// Isotropic Gaussian whose degree-0 color renders as `rgb`.
    pub fn isotropic(position: Vector3<f64>, sigma: f64, opacity: f64, rgb: [f64; 3]) -> Self {
        Self::new(position, opacity, Vector3::repeat(sigma), UnitQuaternion::identity(), sh::rgb_to_dc(rgb))
    }

    /// `R · diag(s)`; the covariance is this times its transpose.
    pub fn scaled_rotation(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner() * Matrix3::from_diagonal(&self.scale)
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        let m = self.scaled_rotation();
        m * m.transpose()
    }

    pub fn sh_degree(&self) -> Option<usize> {
        sh::degree_for_count(self.sh.len())
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("gaussian {index}: {what}")));
        if !(0.0..=1.0).contains(&self.opacity) {
            return bad("opacity outside [0, 1]");
        }
        if self.scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return bad("scale must be positive and finite");
        }
        if (self.rotation.norm() - 1.0).abs() > 1e-6 {
            return bad("rotation is not a unit quaternion");
        }
        if self.position.iter().any(|v| !v.is_finite()) {
            return bad("non-finite position");
        }
        Ok(())
    }
}

/// An ordered, immutable set of Gaussians sharing one SH degree.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatScene {
    gaussians: Vec<Gaussian3D>,
    sh_degree: usize,
}

impl SplatScene {
    pub fn new(gaussians: Vec<Gaussian3D>) -> Result<Self> {
        let count = gaussians.first().map_or(1, |g| g.sh.len());
        let sh_degree = sh::degree_for_count(count).ok_or(Error::UnsupportedShDegree(count))?;
        for (i, g) in gaussians.iter().enumerate() {
            if g.sh.len() != count {
                return Err(Error::Config(format!(
                    "gaussian {i} has {} SH coefficients, scene uses {count}",
                    g.sh.len()
                )));
            }
            g.validate(i)?;
        }
        Ok(Self { gaussians, sh_degree })
    }

    pub fn gaussians(&self) -> &[Gaussian3D] {
        &self.gaussians
    }

    pub fn sh_degree(&self) -> usize {
        self.sh_degree
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Concatenates scenes of equal SH degree.
    pub fn merge(parts: impl IntoIterator<Item = SplatScene>) -> Result<Self> {
        let gaussians = parts.into_iter().flat_map(|s| s.gaussians).collect();
        Self::new(gaussians)
    }

    pub fn into_gaussians(self) -> Vec<Gaussian3D> {
        self.gaussians
    }
}

/// Axis-aligned box in world coordinates, boundary inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        if (0..3).any(|i| !(min[i] <= max[i])) {
            return Err(Error::Config(format!("box min {min:?} exceeds max {max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::from_fn(|i, _| 0.5 * (self.min[i] + self.max[i]))
    }
}

/// Keeps the Gaussians whose center lies inside `bounds`, in original order.
pub fn crop_scene(scene: &SplatScene, bounds: &Aabb) -> SplatScene {
    SplatScene {
        gaussians: scene.gaussians.iter().filter(|g| bounds.contains(&g.position)).cloned().collect(),
        sh_degree: scene.sh_degree,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColoredPoint {
    pub position: Vector3<f64>,
    /// RGB in `[0, 1]`.
    pub color: [f64; 3],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<ColoredPoint>,
}

impl PointCloud {
    pub fn from_positions(positions: impl IntoIterator<Item = Vector3<f64>>) -> Self {
        Self { points: positions.into_iter().map(|position| ColoredPoint { position, color: [0.5; 3] }).collect() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vector3::zeros(), |acc, p| acc + p.position);
        Some(sum / self.points.len() as f64)
    }

    pub fn select(&self, indices: &[usize]) -> Option<PointCloud> {
        let points = indices.iter().map(|&i| self.points.get(i).copied()).collect::<Option<Vec<_>>>()?;
        Some(PointCloud { points })
    }
}

const POSITION: [&str; 3] = ["x", "y", "z"];
const SCALE: [&str; 3] = ["scale_0", "scale_1", "scale_2"];
const ROT: [&str; 4] = ["rot_0", "rot_1", "rot_2", "rot_3"];
const DC: [&str; 3] = ["f_dc_0", "f_dc_1", "f_dc_2"];

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-30, 1.0 - 1e-16);
    (p / (1.0 - p)).ln()
}

/// Parses a binary (or ASCII) 3DGS splat PLY.
pub fn parse_splat_file(bytes: &[u8]) -> Result<SplatScene> {
    let table = ply::read_vertices(bytes)?;
    let columns = |names: &[&str]| names.iter().map(|n| table.require(n)).collect::<Result<Vec<_>>>();
    let pos = columns(&POSITION)?;
    let scale = columns(&SCALE)?;
    let rot = columns(&ROT)?;
    let dc = columns(&DC)?;
    let opacity = table.require("opacity")?;

    let mut rest: Vec<(usize, usize)> = table
        .properties
        .iter()
        .enumerate()
        .filter_map(|(col, (name, _))| {
            name.strip_prefix("f_rest_").and_then(|k| k.parse::<usize>().ok()).map(|k| (k, col))
        })
        .collect();
    rest.sort_unstable();
    if rest.iter().enumerate().any(|(i, (k, _))| i != *k) {
        return Err(Error::PlyHeader("f_rest_* properties are not contiguous".into()));
    }
    if rest.len() % 3 != 0 {
        return Err(Error::UnsupportedShDegree(rest.len()));
    }
    let per_channel = rest.len() / 3;
    sh::degree_for_count(per_channel + 1).ok_or(Error::UnsupportedShDegree(per_channel + 1))?;

    let mut gaussians = Vec::with_capacity(table.count);
    for row in 0..table.count {
        let get = |col: usize| table.get_finite(row, col);
        let position = Vector3::new(get(pos[0])?, get(pos[1])?, get(pos[2])?);
        let scale = Vector3::new(get(scale[0])?.exp(), get(scale[1])?.exp(), get(scale[2])?.exp());
        let q = Quaternion::new(get(rot[0])?, get(rot[1])?, get(rot[2])?, get(rot[3])?);
        if q.norm() == 0.0 {
            return Err(Error::NonFinite { property: "rot_0".into(), vertex: row });
        }
        let mut coeffs = Vec::with_capacity(per_channel + 1);
        coeffs.push([get(dc[0])?, get(dc[1])?, get(dc[2])?]);
        for k in 0..per_channel {
            coeffs.push([get(rest[k].1)?, get(rest[per_channel + k].1)?, get(rest[2 * per_channel + k].1)?]);
        }
        gaussians.push(Gaussian3D {
            position,
            opacity: sigmoid(get(opacity)?),
            scale,
            rotation: UnitQuaternion::from_quaternion(q),
            sh: coeffs,
        });
    }
    SplatScene::new(gaussians)
}

/// Serializes a scene as binary little-endian 3DGS PLY (inverse of [`parse_splat_file`]).
pub fn write_splat_file(scene: &SplatScene) -> Vec<u8> {
    let per_channel = scene.gaussians.first().map_or(0, |g| g.sh.len() - 1);
    let rest_names: Vec<String> = (0..3 * per_channel).map(|k| format!("f_rest_{k}")).collect();
    let mut props: Vec<(&str, ScalarType)> = vec![
        ("x", ScalarType::F32),
        ("y", ScalarType::F32),
        ("z", ScalarType::F32),
        ("nx", ScalarType::F32),
        ("ny", ScalarType::F32),
        ("nz", ScalarType::F32),
    ];
    props.extend(DC.iter().map(|n| (*n, ScalarType::F32)));
    props.extend(rest_names.iter().map(|n| (n.as_str(), ScalarType::F32)));
    props.push(("opacity", ScalarType::F32));
    props.extend(SCALE.iter().map(|n| (*n, ScalarType::F32)));
    props.extend(ROT.iter().map(|n| (*n, ScalarType::F32)));

    let mut values = Vec::with_capacity(scene.len() * props.len());
    for g in &scene.gaussians {
        values.extend(g.position.iter());
        values.extend([0.0; 3]);
        values.extend(g.sh[0]);
        for c in 0..3 {
            values.extend(g.sh[1..].iter().map(|k| k[c]));
        }
        values.push(logit(g.opacity).clamp(-80.0, 80.0));
        values.extend(g.scale.iter().map(|s| s.ln()));
        let q = g.rotation.quaternion();
        values.extend([q.w, q.i, q.j, q.k]);
    }
    ply::write_vertices(Format::BinaryLittleEndian, &props, &values)
}

pub fn read_splat_file(path: &Path) -> Result<SplatScene> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_splat_file(&bytes)
}

/// Reads `x y z [red green blue]`; 8-bit colors are rescaled to `[0, 1]`.
pub fn parse_point_cloud(bytes: &[u8]) -> Result<PointCloud> {
    let table = ply::read_vertices(bytes)?;
    let pos = [table.require("x")?, table.require("y")?, table.require("z")?];
    let color = ["red", "green", "blue"].map(|n| table.column(n));
    let mut points = Vec::with_capacity(table.count);
    for row in 0..table.count {
        let position = Vector3::new(
            table.get_finite(row, pos[0])?,
            table.get_finite(row, pos[1])?,
            table.get_finite(row, pos[2])?,
        );
        let mut rgb = [0.5; 3];
        for (c, col) in color.iter().enumerate() {
            if let Some(col) = *col {
                let v = table.get_finite(row, col)?;
                rgb[c] = match table.scalar_type(col) {
                    ScalarType::U8 => v / 255.0,
                    ScalarType::U16 => v / 65535.0,
                    _ => v,
                };
            }
        }
        points.push(ColoredPoint { position, color: rgb });
    }
    Ok(PointCloud { points })
}

/// Writes `x y z` as float and colors as `uchar`.
pub fn write_point_cloud(cloud: &PointCloud, format: Format) -> Vec<u8> {
    let props = [
        ("x", ScalarType::F32),
        ("y", ScalarType::F32),
        ("z", ScalarType::F32),
        ("red", ScalarType::U8),
        ("green", ScalarType::U8),
        ("blue", ScalarType::U8),
    ];
    let mut values = Vec::with_capacity(cloud.len() * 6);
    for p in &cloud.points {
        values.extend(p.position.iter());
        values.extend(p.color.iter().map(|c| (c * 255.0).round().clamp(0.0, 255.0)));
    }
    ply::write_vertices(format, &props, &values)
}

pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_point_cloud(&bytes)
}

/// Points drawn per deterministic RNG stream in [`sample_point_cloud`].
const SAMPLE_CHUNK: usize = 1 << 16;

/// Draws `n_points` from the scene's Gaussian mixture.
///
/// A Gaussian is picked with weight `opacity * cbrt(sx * sy * sz)`, the
/// position comes from its 3D normal and the color from its DC term. Chunk
/// `i` of the output uses RNG stream `i`, so the cloud depends only on `seed`.
pub fn sample_point_cloud(scene: &SplatScene, n_points: usize, seed: u64) -> Result<PointCloud> {
    if scene.is_empty() {
        return Err(Error::EmptyScene);
    }
    if n_points == 0 {
        return Err(Error::Config("n_points must be at least 1".into()));
    }
    let weights: Vec<f64> =
        scene.gaussians.iter().map(|g| g.opacity * (g.scale.x * g.scale.y * g.scale.z).cbrt()).collect();
    let picker = WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("sampling weights: {e}")))?;
    let shapes: Vec<(Vector3<f64>, Matrix3<f64>, [f64; 3])> =
        scene.gaussians.iter().map(|g| (g.position, g.scaled_rotation(), sh::dc_to_rgb(g.sh[0]))).collect();

    let mut points = vec![ColoredPoint { position: Vector3::zeros(), color: [0.0; 3] }; n_points];
    crate::par::for_each_chunk_mut(&mut points, SAMPLE_CHUNK, |chunk_idx, chunk| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk_idx as u64);
        for p in chunk {
            let (mu, m, color) = &shapes[picker.sample(&mut rng)];
            let z = Vector3::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
            *p = ColoredPoint { position: mu + m * z, color: *color };
        }
    });
    Ok(PointCloud { points })
}

/// One tree's crop box as stored in the trees file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeBox {
    pub tree_id: String,
    pub min: [f64; 3],
    pub max: [f64; 3],
    /// Trajectory origin; defaults to the box center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<[f64; 3]>,
}

impl TreeBox {
    pub fn aabb(&self) -> Result<Aabb> {
        Aabb::new(self.min, self.max)
    }

    pub fn origin(&self) -> Vector3<f64> {
        match self.origin {
            Some(o) => Vector3::from(o),
            None => Vector3::from_fn(|i, _| 0.5 * (self.min[i] + self.max[i])),
        }
    }
}

/// `{"trees":[{"tree_id":"T01","min":[x,y,z],"max":[x,y,z]}]}`
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TreesFile {
    pub trees: Vec<TreeBox>,
}

impl TreesFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TreesFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        for t in &file.trees {
            t.aabb()?;
        }
        Ok(file)
    }

    pub fn get(&self, tree_id: &str) -> Option<&TreeBox> {
        self.trees.iter().find(|t| t.tree_id == tree_id)
    }
}
