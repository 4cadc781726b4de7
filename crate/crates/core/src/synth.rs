//! Synthetic orchard scenes with known fruit geometry.
//!
//! Trees stand in a row along world X. Each has a trunk, an ellipsoidal
//! canopy of flat leaf Gaussians and spherical fruits on the canopy shell.
//! Fruit annotations are produced the way a person would: sample the fruit's
//! Gaussians into points and pick the point nearest the true calyx.

use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::annotation::{points_file_name, AnnotationRecord, FruitAnnotation};
use crate::camera::{orbit_pose, CameraModel, Intrinsics, OrbitSetting, Sweep, TrajectoryConfig};
use crate::dataset::{Split, SplitConfig};
use crate::error::{Error, Result};
use crate::ply::Format;
use crate::render::sh::rgb_to_dc;
use crate::splat::{
    sample_point_cloud, write_point_cloud, write_splat_file, Gaussian3D, PointCloud, SplatScene, TreeBox, TreesFile,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub trees: usize,
    pub fruits_per_tree: usize,
    pub seed: u64,
    /// Distance between neighbouring trunks, meters.
    pub spacing: f64,
    pub leaves_per_tree: usize,
    pub fruit_radius: f64,
    pub gaussians_per_fruit: usize,
    pub points_per_fruit: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            trees: 3,
            fruits_per_tree: 3,
            seed: 7,
            spacing: 2.6,
            leaves_per_tree: 600,
            fruit_radius: 0.04,
            gaussians_per_fruit: 300,
            points_per_fruit: 2000,
        }
    }
}

/// Ground truth for one generated fruit.
#[derive(Debug, Clone, PartialEq)]
pub struct FruitTruth {
    pub fruit_id: String,
    pub tree_id: String,
    pub center: Vector3<f64>,
    /// Unit direction from center to calyx.
    pub calyx_dir: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthOrchard {
    pub config: SynthConfig,
    pub scene: SplatScene,
    pub trees: TreesFile,
    pub annotations: Vec<FruitAnnotation>,
    pub truth: Vec<FruitTruth>,
}

const CANOPY_RADII: [f64; 3] = [0.8, 0.8, 0.6];
const CANOPY_CENTER_Z: f64 = 1.5;
const LEAF_COLOR: [f64; 3] = [0.18, 0.45, 0.12];
const TRUNK_COLOR: [f64; 3] = [0.35, 0.22, 0.1];
const FRUIT_COLOR: [f64; 3] = [0.8, 0.1, 0.08];

pub fn tree_id(i: usize) -> String {
    format!("T{:02}", i + 1)
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// `n` roughly even directions on the unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let t = golden * i as f64;
            Vector3::new(r * t.cos(), y, r * t.sin())
        })
        .collect()
}

/// Gaussians tiling a sphere surface.
pub fn fruit_gaussians(center: Vector3<f64>, radius: f64, count: usize) -> Vec<Gaussian3D> {
    let sigma = radius * 0.2;
    fibonacci_sphere(count)
        .into_iter()
        .map(|d| Gaussian3D::isotropic(center + d * (radius - sigma), sigma, 0.95, FRUIT_COLOR))
        .collect()
}

pub fn generate_orchard(cfg: &SynthConfig) -> Result<SynthOrchard> {
    if cfg.trees == 0 || cfg.points_per_fruit < crate::annotation::MIN_FRUIT_POINTS {
        return Err(Error::Config("need at least one tree and 50 points per fruit".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gaussians = Vec::new();
    let mut trees = Vec::new();
    let mut annotations = Vec::new();
    let mut truth = Vec::new();
    let mut fruit_no = 0usize;
    let half = 0.5 * cfg.spacing - 0.2;

    for t in 0..cfg.trees {
        let tid = tree_id(t);
        let base = Vector3::new(t as f64 * cfg.spacing, 0.0, 0.0);
        let canopy = base + Vector3::new(0.0, 0.0, CANOPY_CENTER_Z);
        trees.push(TreeBox {
            tree_id: tid.clone(),
            min: [base.x - half, -half, -0.1],
            max: [base.x + half, half, 2.3],
            origin: None,
        });

        for k in 0..20 {
            let z = 0.05 + 0.9 * k as f64 / 19.0;
            gaussians.push(Gaussian3D::isotropic(base + Vector3::new(0.0, 0.0, z), 0.05, 0.95, TRUNK_COLOR));
        }

        let mut centers: Vec<Vector3<f64>> = Vec::new();
        let mut attempts = 0;
        while centers.len() < cfg.fruits_per_tree {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::Config("could not place fruits without overlap".into()));
            }
            let mut d = unit_vector(&mut rng);
            d.z *= 0.5;
            let d = d.normalize();
            let c = canopy + d.component_mul(&Vector3::from(CANOPY_RADII)) * 0.95;
            if centers.iter().all(|o| (o - c).norm() > 6.0 * cfg.fruit_radius) {
                centers.push(c);
            }
        }

        let mut leaves = 0;
        while leaves < cfg.leaves_per_tree {
            let p = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if p.norm() > 1.0 {
                continue;
            }
            let pos = canopy + p.component_mul(&Vector3::from(CANOPY_RADII));
            if centers.iter().any(|c| (c - pos).norm() < cfg.fruit_radius + 0.06) {
                continue;
            }
            let rot = UnitQuaternion::from_euler_angles(
                rng.random_range(-3.1..3.1),
                rng.random_range(-1.5..1.5),
                rng.random_range(-3.1..3.1),
            );
            gaussians.push(Gaussian3D::new(pos, 0.85, Vector3::new(0.035, 0.02, 0.003), rot, rgb_to_dc(LEAF_COLOR)));
            leaves += 1;
        }

        for c in centers {
            fruit_no += 1;
            let fid = format!("F{fruit_no:03}");
            let body = fruit_gaussians(c, cfg.fruit_radius, cfg.gaussians_per_fruit);
            let calyx_dir = unit_vector(&mut rng);
            let cloud =
                sample_point_cloud(&SplatScene::new(body.clone())?, cfg.points_per_fruit, cfg.seed ^ fruit_no as u64)?;
            let target = c + calyx_dir * cfg.fruit_radius;
            let calyx = nearest_point(&cloud, &target).expect("non-empty cloud");
            annotations.push(FruitAnnotation { fruit_id: fid.clone(), tree_id: tid.clone(), points: cloud, calyx });
            truth.push(FruitTruth { fruit_id: fid, tree_id: tid.clone(), center: c, calyx_dir });
            gaussians.extend(body);
        }
    }
    Ok(SynthOrchard {
        config: cfg.clone(),
        scene: SplatScene::new(gaussians)?,
        trees: TreesFile { trees },
        annotations,
        truth,
    })
}

pub fn nearest_point(cloud: &PointCloud, target: &Vector3<f64>) -> Option<Vector3<f64>> {
    cloud
        .points
        .iter()
        .map(|p| p.position)
        .min_by(|a, b| (a - target).norm_squared().total_cmp(&(b - target).norm_squared()))
}

/// First ten trees train, next two val, the rest test; smaller orchards
/// keep the same proportions with at least one test tree.
pub fn orchard_split(tree_ids: &[String]) -> SplitConfig {
    let n = tree_ids.len();
    let (train, val) = if n >= 13 {
        (10, 2)
    } else {
        let test = 1.min(n);
        let val = if n >= 3 { 1 } else { 0 };
        (n - test - val, val)
    };
    SplitConfig(
        tree_ids
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let s = if i < train {
                    Split::Train
                } else if i < train + val {
                    Split::Val
                } else {
                    Split::Test
                };
                (t.clone(), s)
            })
            .collect(),
    )
}

/// Uniformly random split assignment.
pub fn random_split(tree_ids: &[String], seed: u64) -> SplitConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SplitConfig(tree_ids.iter().map(|t| (t.clone(), Split::ALL[rng.random_range(0..3)])).collect())
}

/// A small orbit for desk-scale renders: `yaws` directions at one height,
/// level camera, fixed distance.
pub fn small_trajectory(yaws: usize, distance: f64, intrinsics: Intrinsics) -> TrajectoryConfig {
    TrajectoryConfig {
        height: Sweep::fixed(0.4),
        roll: Sweep::fixed(0.0),
        pitch: Sweep::fixed(0.0),
        yaw: Sweep::full_turn(yaws),
        distance: Sweep::fixed(distance),
        tree_origin: [0.0; 3],
        intrinsics: Some(intrinsics),
    }
}

/// "Photo" cameras: `per_tree` views of each tree from the side of the row.
pub fn orchard_cameras(orchard: &SynthOrchard, intrinsics: Intrinsics, per_tree: usize) -> Vec<CameraModel> {
    let mut out = Vec::new();
    for tree in &orchard.trees.trees {
        for k in 0..per_tree {
            let spread = if per_tree > 1 { k as f64 / (per_tree - 1) as f64 - 0.5 } else { 0.0 };
            let s = OrbitSetting {
                height: 0.4,
                roll: 0.0,
                pitch: 0.0,
                yaw: std::f64::consts::FRAC_PI_2 + 0.6 * spread,
                distance: 3.0,
            };
            let pose = orbit_pose(&tree.origin(), &s);
            out.push(CameraModel::new(format!("IMG_{}_{k:02}", tree.tree_id), intrinsics, pose));
        }
    }
    out
}

/// Paths written by [`write_orchard`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub scene: PathBuf,
    pub trees: PathBuf,
    pub splits: PathBuf,
    pub annotations: PathBuf,
}

/// Writes the scene, tree boxes, a split config and annotation files.
pub fn write_orchard(orchard: &SynthOrchard, splits: &SplitConfig, dir: &Path) -> Result<SynthFiles> {
    let ann_dir = dir.join("annotations");
    std::fs::create_dir_all(&ann_dir).map_err(|e| Error::io(&ann_dir, e))?;
    let files = SynthFiles {
        scene: dir.join("scene.ply"),
        trees: dir.join("trees.json"),
        splits: dir.join("splits.json"),
        annotations: ann_dir.clone(),
    };
    std::fs::write(&files.scene, write_splat_file(&orchard.scene)).map_err(|e| Error::io(&files.scene, e))?;
    let trees = serde_json::to_string_pretty(&orchard.trees).map_err(|e| Error::json(&files.trees, e))?;
    std::fs::write(&files.trees, trees).map_err(|e| Error::io(&files.trees, e))?;
    splits.save(&files.splits)?;
    for ann in &orchard.annotations {
        let points_file = points_file_name(&ann.tree_id, &ann.fruit_id);
        let path = ann_dir.join(&points_file);
        std::fs::write(&path, write_point_cloud(&ann.points, Format::BinaryLittleEndian))
            .map_err(|e| Error::io(&path, e))?;
        AnnotationRecord {
            fruit_id: ann.fruit_id.clone(),
            tree_id: ann.tree_id.clone(),
            calyx: ann.calyx.into(),
            points_file,
            point_indices: None,
            calyx_index: None,
        }
        .save(&ann_dir.join(format!("{}.json", ann.fruit_id)))?;
    }
    Ok(files)
}
