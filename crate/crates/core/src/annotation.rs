//! Fruit poses from segmented point clouds, their projection into cameras,
//! and per-image occlusion rates.

use std::collections::HashSet;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, MIN_DEPTH};
use crate::error::{Error, Result};
use crate::render::{render_point_depth, render_scene, DepthImage};
use crate::splat::{read_point_cloud, PointCloud, SplatScene};

pub const MIN_FRUIT_POINTS: usize = 50;
/// Depth margin (meters) by which scene content must be nearer than the fruit.
pub const OCCLUSION_THRESHOLD: f64 = 0.015;
/// Disc radius used when z-buffering fruit points.
pub const FRUIT_POINT_RADIUS_PX: u32 = 1;
/// Calyx closer than this to the centroid leaves the axis undefined.
pub const MIN_AXIS_LENGTH: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct FruitAnnotation {
    pub fruit_id: String,
    pub tree_id: String,
    pub points: PointCloud,
    pub calyx: Vector3<f64>,
}

impl FruitAnnotation {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidAnnotation { fruit_id: self.fruit_id.clone(), reason };
        if self.fruit_id.is_empty() {
            return Err(invalid("fruit_id is empty".into()));
        }
        if self.points.len() < MIN_FRUIT_POINTS {
            return Err(invalid(format!("{} points, at least {MIN_FRUIT_POINTS} required", self.points.len())));
        }
        if self.points.points.iter().any(|p| !p.position.iter().all(|c| c.is_finite()))
            || !self.calyx.iter().all(|c| c.is_finite())
        {
            return Err(invalid("non-finite coordinate".into()));
        }
        let centroid = self.points.centroid().expect("non-empty");
        let radius = self.points.points.iter().map(|p| (p.position - centroid).norm()).fold(0.0, f64::max);
        let dist = (self.calyx - centroid).norm();
        if dist > 3.0 * radius {
            return Err(invalid(format!(
                "calyx is {dist:.4} m from the centroid, beyond 3x the bounding radius {radius:.4} m"
            )));
        }
        Ok(())
    }
}

/// Oriented fruit box whose X-axis points from the fruit center to the calyx.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FruitPose {
    /// Box midpoint.
    pub center: Vector3<f64>,
    /// Point-cloud centroid the axis was measured from.
    pub centroid: Vector3<f64>,
    pub axis: Vector3<f64>,
    /// Box-to-frame rotation; its first column equals `axis`.
    pub rotation: UnitQuaternion<f64>,
    /// Full side lengths along the box axes.
    pub extents: Vector3<f64>,
}

impl FruitPose {
    /// Re-expresses the pose in a camera's frame.
    pub fn to_camera(&self, camera: &CameraModel) -> FruitPose {
        let w2c = camera.pose.rotation.inverse();
        FruitPose {
            center: camera.world_to_camera(&self.center),
            centroid: camera.world_to_camera(&self.centroid),
            axis: w2c * self.axis,
            rotation: w2c * self.rotation,
            extents: self.extents,
        }
    }
}

/// Builds the fruit box from the annotation's points and calyx.
///
/// Box Y is `axis × up` with world up `+Z`, falling back to `+X` when the
/// axis is nearly vertical; Z completes the right-handed frame.
pub fn build_fruit_pose(ann: &FruitAnnotation) -> Result<FruitPose> {
    ann.validate()?;
    let centroid = ann.points.centroid().expect("validated");
    let to_calyx = ann.calyx - centroid;
    if to_calyx.norm() < MIN_AXIS_LENGTH {
        return Err(Error::DegenerateAxis(format!("calyx of `{}` coincides with the point centroid", ann.fruit_id)));
    }
    let x = to_calyx.normalize();
    let mut y = x.cross(&Vector3::z());
    if y.norm() < 1e-3 {
        y = x.cross(&Vector3::x());
    }
    let y = y.normalize();
    let z = x.cross(&y);
    let basis = Matrix3::from_columns(&[x, y, z]);

    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in &ann.points.points {
        let local = basis.tr_mul(&(p.position - centroid));
        lo = lo.inf(&local);
        hi = hi.sup(&local);
    }
    let extents = hi - lo;
    if extents.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidAnnotation {
            fruit_id: ann.fruit_id.clone(),
            reason: "points are flat along a box axis".into(),
        });
    }
    Ok(FruitPose {
        center: centroid + basis * ((lo + hi) * 0.5),
        centroid,
        axis: x,
        rotation: UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(basis)),
        extents,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occlusion {
    /// Percentage in `[0, 100]`.
    pub rate: f64,
    /// Fruit silhouette pixels.
    pub s_t: usize,
    /// Silhouette pixels where the scene is nearer by more than the threshold.
    pub s_o: usize,
}

/// Occlusion from a fruit depth image and a scene depth image of the same camera.
///
/// Scene pixels with no depth never count as occluding. Returns `None` when
/// the fruit covers no pixel.
pub fn occlusion_from_depths(fruit: &DepthImage, scene: &DepthImage, threshold: f64) -> Result<Option<Occlusion>> {
    if fruit.width != scene.width || fruit.height != scene.height {
        return Err(Error::SizeMismatch(format!(
            "fruit depth {}x{} vs scene depth {}x{}",
            fruit.width, fruit.height, scene.width, scene.height
        )));
    }
    let (mut s_t, mut s_o) = (0usize, 0usize);
    for (&f, &s) in fruit.depth.iter().zip(&scene.depth) {
        if f > 0.0 {
            s_t += 1;
            if s > 0.0 && f as f64 - s as f64 > threshold {
                s_o += 1;
            }
        }
    }
    Ok((s_t > 0).then(|| Occlusion { rate: s_o as f64 / s_t as f64 * 100.0, s_t, s_o }))
}

/// Occlusion of a fruit against an already rendered scene depth.
pub fn occlusion_with_scene_depth(
    ann: &FruitAnnotation,
    scene_depth: &DepthImage,
    camera: &CameraModel,
    threshold: f64,
) -> Result<Occlusion> {
    let fruit = render_point_depth(&ann.points, camera, FRUIT_POINT_RADIUS_PX);
    occlusion_from_depths(&fruit, scene_depth, threshold)?
        .ok_or_else(|| Error::NotVisible { fruit_id: ann.fruit_id.clone(), camera_id: camera.id.clone() })
}

/// Renders the scene and measures how much of the fruit it hides.
pub fn compute_occlusion(
    ann: &FruitAnnotation,
    scene: &SplatScene,
    camera: &CameraModel,
    threshold: f64,
) -> Result<Occlusion> {
    let (_, scene_depth) = render_scene(scene, camera)?;
    occlusion_with_scene_depth(ann, &scene_depth, camera, threshold)
}

/// True when any fruit point lies in front of the camera and inside the image.
pub fn fruit_in_view(ann: &FruitAnnotation, camera: &CameraModel) -> bool {
    ann.points.points.iter().any(|p| camera.sees(&p.position))
}

/// A fruit box in camera coordinates as written to label and prediction files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraBox {
    pub center: [f64; 3],
    pub extents: [f64; 3],
    /// Box-to-camera rotation `[w, x, y, z]`.
    pub q: [f64; 4],
    pub axis: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroid: Option<[f64; 3]>,
}

impl CameraBox {
    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.q;
        UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z))
    }
}

impl From<&FruitPose> for CameraBox {
    fn from(p: &FruitPose) -> Self {
        let q = p.rotation.quaternion();
        Self {
            center: p.center.into(),
            extents: p.extents.into(),
            q: [q.w, q.i, q.j, q.k],
            axis: p.axis.into(),
            centroid: Some(p.centroid.into()),
        }
    }
}

/// One fruit instance in one image. Lengths in meters, pixels for `bbox2d`,
/// percent for `occlusion`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageLabel {
    pub fruit_id: String,
    pub tree_id: String,
    pub camera_id: String,
    /// `[x_min, y_min, x_max, y_max]`, clipped to the image.
    pub bbox2d: [f64; 4],
    pub obb_camera: CameraBox,
    pub occlusion: f64,
    #[serde(rename = "s_T")]
    pub s_t: usize,
    #[serde(rename = "s_O")]
    pub s_o: usize,
}

/// Label for a fruit seen by `camera`.
pub fn project_label(
    pose: &FruitPose,
    ann: &FruitAnnotation,
    camera: &CameraModel,
    occ: &Occlusion,
) -> Result<ImageLabel> {
    let not_visible = || Error::NotVisible { fruit_id: ann.fruit_id.clone(), camera_id: camera.id.clone() };
    let (w, h) = (camera.width() as f64, camera.height() as f64);
    let mut any_inside = false;
    let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in &ann.points.points {
        let pc = camera.world_to_camera(&p.position);
        if pc.z <= MIN_DEPTH {
            continue;
        }
        let px = camera.project_camera_point(&pc);
        any_inside |= px.x >= 0.0 && px.y >= 0.0 && px.x < w && px.y < h;
        bb = [bb[0].min(px.x), bb[1].min(px.y), bb[2].max(px.x), bb[3].max(px.y)];
    }
    if !any_inside {
        return Err(not_visible());
    }
    let bbox2d = [bb[0].clamp(0.0, w), bb[1].clamp(0.0, h), bb[2].clamp(0.0, w), bb[3].clamp(0.0, h)];
    if !(bbox2d[0] < bbox2d[2] && bbox2d[1] < bbox2d[3]) {
        return Err(not_visible());
    }
    Ok(ImageLabel {
        fruit_id: ann.fruit_id.clone(),
        tree_id: ann.tree_id.clone(),
        camera_id: camera.id.clone(),
        bbox2d,
        obb_camera: CameraBox::from(&pose.to_camera(camera)),
        occlusion: occ.rate,
        s_t: occ.s_t,
        s_o: occ.s_o,
    })
}

/// Label for `ann` in `camera` against a rendered scene depth, or `None`
/// when no fruit point is in view.
pub fn label_fruit(
    pose: &FruitPose,
    ann: &FruitAnnotation,
    camera: &CameraModel,
    scene_depth: &DepthImage,
    threshold: f64,
) -> Result<Option<ImageLabel>> {
    if !fruit_in_view(ann, camera) {
        return Ok(None);
    }
    let occ = match occlusion_with_scene_depth(ann, scene_depth, camera, threshold) {
        Ok(o) => o,
        Err(Error::NotVisible { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    match project_label(pose, ann, camera, &occ) {
        Ok(l) => Ok(Some(l)),
        Err(Error::NotVisible { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn write_labels(path: &Path, labels: &[ImageLabel]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for l in labels {
        serde_json::to_writer(&mut out, l).map_err(|e| Error::json(path, e))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<ImageLabel>> {
    read_json_lines(path)
}

pub(crate) fn read_json_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(out)
}

/// On-disk annotation: `{fruit_id, tree_id, calyx, points_file}`.
///
/// `point_indices` and `calyx_index` refer to the full-resolution scene
/// cloud the fruit was cut from, when the annotation tool produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub fruit_id: String,
    pub tree_id: String,
    pub calyx: [f64; 3],
    pub points_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calyx_index: Option<usize>,
}

impl AnnotationRecord {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads the point file (relative paths resolve against `dir`).
    pub fn resolve(&self, dir: &Path) -> Result<FruitAnnotation> {
        let ann = FruitAnnotation {
            fruit_id: self.fruit_id.clone(),
            tree_id: self.tree_id.clone(),
            points: read_point_cloud(&dir.join(&self.points_file))?,
            calyx: Vector3::from(self.calyx),
        };
        ann.validate()?;
        Ok(ann)
    }
}

/// Default point-file name for a fruit.
pub fn points_file_name(tree_id: &str, fruit_id: &str) -> String {
    format!("fruit_{tree_id}_{fruit_id}.ply")
}

/// JSON annotation files in `dir`, sorted by file name.
pub fn annotation_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads and validates every annotation in `dir`; fruit ids must be unique.
pub fn load_annotations(dir: &Path) -> Result<Vec<FruitAnnotation>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for path in annotation_files(dir)? {
        let record = AnnotationRecord::load(&path)?;
        if !seen.insert(record.fruit_id.clone()) {
            return Err(Error::InvalidAnnotation {
                fruit_id: record.fruit_id,
                reason: format!("duplicate fruit_id in {}", path.display()),
            });
        }
        out.push(record.resolve(dir)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{CameraPose, Intrinsics};

    fn sphere(center: Vector3<f64>, r: f64, n: usize) -> PointCloud {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        PointCloud::from_positions((0..n).map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rad = (1.0 - y * y).sqrt();
            let th = golden * i as f64;
            center + r * Vector3::new(rad * th.cos(), y, rad * th.sin())
        }))
    }

    fn ann(calyx: Vector3<f64>) -> FruitAnnotation {
        FruitAnnotation {
            fruit_id: "F1".into(),
            tree_id: "T1".into(),
            points: sphere(Vector3::zeros(), 0.04, 2000),
            calyx,
        }
    }

    #[test]
    fn too_few_points_rejected() {
        let mut a = ann(Vector3::new(0.04, 0.0, 0.0));
        a.points.points.truncate(10);
        assert!(matches!(a.validate(), Err(Error::InvalidAnnotation { .. })));
    }

    #[test]
    fn far_calyx_rejected() {
        assert!(ann(Vector3::new(1.0, 0.0, 0.0)).validate().is_err());
    }

    #[test]
    fn coincident_calyx_rejected() {
        assert!(matches!(build_fruit_pose(&ann(Vector3::new(0.0, 0.0, 0.0005))), Err(Error::DegenerateAxis(_))));
    }

    #[test]
    fn vertical_axis_uses_fallback() {
        let pose = build_fruit_pose(&ann(Vector3::new(0.0, 0.0, 0.04))).unwrap();
        let m = pose.rotation.to_rotation_matrix();
        assert!((pose.axis - Vector3::z()).norm() < 1e-3);
        assert!((m.matrix().column(0) - pose.axis).norm() < 1e-9);
        assert!((m.matrix().transpose() * m.matrix() - Matrix3::identity()).norm() < 1e-9);
    }

    #[test]
    fn scene_without_depth_does_not_occlude() {
        let fruit = DepthImage { width: 2, height: 1, depth: vec![1.0, 1.0] };
        let scene = DepthImage { width: 2, height: 1, depth: vec![0.0, 0.5] };
        let o = occlusion_from_depths(&fruit, &scene, OCCLUSION_THRESHOLD).unwrap().unwrap();
        assert_eq!((o.s_t, o.s_o), (2, 1));
        assert_eq!(o.rate, 50.0);
    }

    #[test]
    fn label_bbox_clipped_at_border() {
        let cam = CameraModel::new(
            "c",
            Intrinsics::new(1000.0, 1000.0, 0.0, 50.0, 100, 100).unwrap(),
            CameraPose { rotation: UnitQuaternion::identity(), translation: Vector3::new(0.0, 0.0, -1.0) },
        );
        let a = ann(Vector3::new(0.04, 0.0, 0.0));
        let pose = build_fruit_pose(&a).unwrap();
        let occ = Occlusion { rate: 0.0, s_t: 1, s_o: 0 };
        let l = project_label(&pose, &a, &cam, &occ).unwrap();
        assert_eq!(l.bbox2d[0], 0.0);
        assert!((l.bbox2d[2] - 40.0).abs() < 0.1);
    }

    #[test]
    fn label_json_uses_documented_names() {
        let l = ImageLabel {
            fruit_id: "F".into(),
            tree_id: "T".into(),
            camera_id: "c".into(),
            bbox2d: [0.0, 0.0, 1.0, 1.0],
            obb_camera: CameraBox {
                center: [0.0; 3],
                extents: [1.0; 3],
                q: [1.0, 0.0, 0.0, 0.0],
                axis: [1.0, 0.0, 0.0],
                centroid: None,
            },
            occlusion: 0.0,
            s_t: 3,
            s_o: 1,
        };
        let v: serde_json::Value = serde_json::to_value(&l).unwrap();
        assert_eq!(v["s_T"], 3);
        assert_eq!(v["s_O"], 1);
    }
}
