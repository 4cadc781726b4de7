//! Dataset assembly: per-tree splits, original-image masking and patching,
//! novel-view rendering, occlusion filtering and manifests.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{
    build_fruit_pose, label_fruit, read_labels, write_labels, FruitAnnotation, FruitPose, ImageLabel,
    OCCLUSION_THRESHOLD,
};
use crate::camera::{
    generate_patch_grid, patch_camera, trajectory_cameras, CameraModel, CameraRecord, Intrinsics, PatchRect,
    TrajectoryConfig,
};
use crate::error::{Error, Result};
use crate::eval::ZERO_ORIENTATION_AXIS;
use crate::par;
use crate::render::{render_scene, DepthImage, RenderSidecar, RgbImage};
use crate::splat::{crop_scene, SplatScene, TreeBox, TreesFile};

/// Scene depth may exceed tree depth by this much (meters) before the
/// pixel counts as hidden behind another tree.
pub const MASK_EPSILON: f64 = 0.005;
pub const DEFAULT_PATCH_SIZE: u32 = 1300;
/// Occlusion limits (percent) used for training sets.
pub const TRAIN_OCCLUSION_LIMITS: [f64; 6] = [100.0, 95.0, 85.0, 75.0, 65.0, 55.0];
/// Occlusion limits (percent) used for test sets.
pub const TEST_OCCLUSION_LIMITS: [f64; 13] =
    [100.0, 99.9, 99.0, 95.0, 90.0, 85.0, 80.0, 75.0, 70.0, 65.0, 60.0, 55.0, 50.0];
/// A fruit counts as present in an image when any of its points projects inside it.
pub const PRESENCE_RULE: &str = "any-point-in-frustum";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const UNFILTERED_LABELS_FILE: &str = "labels_unfiltered.jsonl";
/// Left in the output directory until a build finishes.
pub const PARTIAL_MARKER: &str = ".partial";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `{"T01": "train", "T02": "test", ...}`
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SplitConfig(pub BTreeMap<String, Split>);

impl SplitConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn split_of(&self, tree_id: &str) -> Option<Split> {
        self.0.get(tree_id).copied()
    }

    /// Every tree in `trees` must be assigned, and nothing else.
    pub fn validate(&self, trees: &TreesFile) -> Result<()> {
        let known: BTreeSet<&str> = trees.trees.iter().map(|t| t.tree_id.as_str()).collect();
        if known.len() != trees.trees.len() {
            return Err(Error::Config("duplicate tree_id in trees file".into()));
        }
        for t in &known {
            if !self.0.contains_key(*t) {
                return Err(Error::Config(format!("tree `{t}` has no split")));
            }
        }
        for t in self.0.keys() {
            if !known.contains(t.as_str()) {
                return Err(Error::Config(format!("split config names unknown tree `{t}`")));
            }
        }
        Ok(())
    }

    pub fn trees_in(&self, split: Split) -> Vec<&str> {
        self.0.iter().filter(|(_, s)| **s == split).map(|(t, _)| t.as_str()).collect()
    }
}

/// Blacks out pixels of a photo that do not belong to one tree.
///
/// A pixel is dropped when the tree has no depth there or when the full
/// scene is nearer than the tree by more than [`MASK_EPSILON`].
pub fn mask_original_image(
    rgb: &RgbImage,
    full_depth: &DepthImage,
    cropped_depth: &DepthImage,
) -> Result<(RgbImage, DepthImage)> {
    let dims =
        [(rgb.width, rgb.height), (full_depth.width, full_depth.height), (cropped_depth.width, cropped_depth.height)];
    if dims.iter().any(|d| *d != dims[0]) {
        return Err(Error::SizeMismatch(format!("mask inputs have sizes {dims:?}")));
    }
    let mut depth = cropped_depth.clone();
    let mut out = rgb.clone();
    for i in 0..depth.depth.len() {
        let c = cropped_depth.depth[i] as f64;
        if c == 0.0 || (full_depth.depth[i] as f64) < c - MASK_EPSILON {
            depth.depth[i] = 0.0;
            out.pixels[i] = [0.0; 3];
        }
    }
    Ok((out, depth))
}

pub fn filter_labels_by_occlusion(labels: &[ImageLabel], limit: f64) -> Vec<ImageLabel> {
    labels.iter().filter(|l| l.occlusion <= limit).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Original,
    Rendered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    /// Paths are relative to the manifest's directory unless absolute.
    pub rgb: String,
    pub depth: String,
    pub sidecar: String,
    pub camera_id: String,
    pub tree_id: String,
    pub source: Source,
    /// Labels of this image that passed the occlusion limit.
    pub labels: usize,
    pub unfiltered_labels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch: Option<PatchRect>,
    pub camera: CameraRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub images: usize,
    pub labels: usize,
    pub unfiltered_labels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleInfo {
    pub target: usize,
    pub achieved: usize,
    pub seed: u64,
    pub source_labels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split: Split,
    pub source: Source,
    pub trees: Vec<String>,
    /// Percent; labels above it are only in the unfiltered file.
    pub occlusion_limit: f64,
    pub occlusion_threshold_m: f64,
    pub presence_rule: String,
    /// Box axis of a zero-rotation prediction in camera coordinates.
    pub zero_orientation_axis: [f64; 3],
    pub label_file: String,
    pub unfiltered_label_file: String,
    pub counts: Counts,
    pub images: Vec<ImageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<SubsampleInfo>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Writes through a temporary file and a rename.
    pub fn save_atomic(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

/// Where dataset images come from.
#[derive(Debug, Clone)]
pub enum ViewSource {
    /// Novel views of each tree crop along a trajectory centered on the tree.
    Rendered { trajectory: TrajectoryConfig, intrinsics: Intrinsics },
    /// Registered photos, masked per tree and cut into patches. Without an
    /// image directory the full-scene render stands in for the photo.
    Original { cameras: Vec<CameraModel>, images: Option<PathBuf>, patch_size: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub occlusion_limit: f64,
    pub occlusion_threshold: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { occlusion_limit: 100.0, occlusion_threshold: OCCLUSION_THRESHOLD }
    }
}

pub struct BuildInputs<'a> {
    pub scene: &'a SplatScene,
    pub trees: &'a TreesFile,
    pub annotations: &'a [FruitAnnotation],
    pub splits: &'a SplitConfig,
}

struct Fruit<'a> {
    ann: &'a FruitAnnotation,
    pose: FruitPose,
}

struct Emitted {
    split: Split,
    record: ImageRecord,
    labels: Vec<ImageLabel>,
}

/// Builds one dataset per split under `out_dir/{split}` and returns their
/// manifests. A `.partial` marker stays in `out_dir` if anything fails.
pub fn build_dataset(
    inputs: &BuildInputs<'_>,
    views: &ViewSource,
    opts: &BuildOptions,
    out_dir: &Path,
) -> Result<Vec<DatasetManifest>> {
    inputs.splits.validate(inputs.trees)?;
    let fruits = prepare_fruits(inputs)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let marker = out_dir.join(PARTIAL_MARKER);
    std::fs::write(&marker, "incomplete build\n").map_err(|e| Error::io(&marker, e))?;

    let splits: BTreeSet<Split> = inputs.splits.0.values().copied().collect();
    for s in &splits {
        for sub in ["images", "depth", "sidecars"] {
            let d = out_dir.join(s.as_str()).join(sub);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
    }

    let source = match views {
        ViewSource::Rendered { .. } => Source::Rendered,
        ViewSource::Original { .. } => Source::Original,
    };
    let emitted = match views {
        ViewSource::Rendered { trajectory, intrinsics } => {
            build_rendered(inputs, &fruits, trajectory, *intrinsics, opts, out_dir)?
        }
        ViewSource::Original { cameras, images, patch_size } => {
            build_original(inputs, &fruits, cameras, images.as_deref(), *patch_size, opts, out_dir)?
        }
    };

    let mut manifests = Vec::new();
    for split in splits {
        let dir = out_dir.join(split.as_str());
        let mut records = Vec::new();
        let mut all_labels = Vec::new();
        for e in emitted.iter().filter(|e| e.split == split) {
            records.push(e.record.clone());
            all_labels.extend(e.labels.iter().cloned());
        }
        let kept = filter_labels_by_occlusion(&all_labels, opts.occlusion_limit);
        write_labels(&dir.join(UNFILTERED_LABELS_FILE), &all_labels)?;
        write_labels(&dir.join(LABELS_FILE), &kept)?;
        let manifest = DatasetManifest {
            split,
            source,
            trees: inputs.splits.trees_in(split).into_iter().map(String::from).collect(),
            occlusion_limit: opts.occlusion_limit,
            occlusion_threshold_m: opts.occlusion_threshold,
            presence_rule: PRESENCE_RULE.into(),
            zero_orientation_axis: ZERO_ORIENTATION_AXIS,
            label_file: LABELS_FILE.into(),
            unfiltered_label_file: UNFILTERED_LABELS_FILE.into(),
            counts: Counts { images: records.len(), labels: kept.len(), unfiltered_labels: all_labels.len() },
            images: records,
            subsample: None,
        };
        manifest.save_atomic(&dir.join(MANIFEST_FILE))?;
        manifests.push(manifest);
    }
    std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    Ok(manifests)
}

fn prepare_fruits<'a>(inputs: &BuildInputs<'a>) -> Result<Vec<Fruit<'a>>> {
    let mut seen = BTreeSet::new();
    inputs
        .annotations
        .iter()
        .map(|ann| {
            if !seen.insert(ann.fruit_id.as_str()) {
                return Err(Error::InvalidAnnotation {
                    fruit_id: ann.fruit_id.clone(),
                    reason: "duplicate fruit_id".into(),
                });
            }
            if inputs.trees.get(&ann.tree_id).is_none() {
                return Err(Error::InvalidAnnotation {
                    fruit_id: ann.fruit_id.clone(),
                    reason: format!("unknown tree `{}`", ann.tree_id),
                });
            }
            Ok(Fruit { ann, pose: build_fruit_pose(ann)? })
        })
        .collect()
}

fn fruits_of<'f, 'a>(fruits: &'f [Fruit<'a>], tree_id: &str) -> Vec<&'f Fruit<'a>> {
    fruits.iter().filter(|f| f.ann.tree_id == tree_id).collect()
}

fn labels_for(
    fruits: &[&Fruit<'_>],
    camera: &CameraModel,
    scene_depth: &DepthImage,
    threshold: f64,
) -> Result<Vec<ImageLabel>> {
    let mut out = Vec::new();
    for f in fruits {
        if let Some(l) = label_fruit(&f.pose, f.ann, camera, scene_depth, threshold)? {
            out.push(l);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn write_image(
    dir: &Path,
    split: Split,
    camera: &CameraModel,
    tree: &str,
    source: Source,
    rgb: &RgbImage,
    depth: &DepthImage,
    sh_degree: usize,
    patch: Option<PatchRect>,
    labels: Vec<ImageLabel>,
    limit: f64,
) -> Result<Emitted> {
    let id = &camera.id;
    let rel_rgb = format!("images/{id}.png");
    let rel_depth = format!("depth/{id}.png");
    let rel_side = format!("sidecars/{id}.json");
    rgb.save_png(&dir.join(&rel_rgb))?;
    depth.save_png(&dir.join(&rel_depth))?;
    RenderSidecar::new(id, camera.width(), camera.height(), sh_degree).save(&dir.join(&rel_side))?;
    Ok(Emitted {
        split,
        record: ImageRecord {
            image_id: id.clone(),
            rgb: rel_rgb,
            depth: rel_depth,
            sidecar: rel_side,
            camera_id: id.clone(),
            tree_id: tree.to_string(),
            source,
            labels: labels.iter().filter(|l| l.occlusion <= limit).count(),
            unfiltered_labels: labels.len(),
            patch,
            camera: CameraRecord::from(camera),
        },
        labels,
    })
}

fn build_rendered(
    inputs: &BuildInputs<'_>,
    fruits: &[Fruit<'_>],
    trajectory: &TrajectoryConfig,
    intrinsics: Intrinsics,
    opts: &BuildOptions,
    out_dir: &Path,
) -> Result<Vec<Emitted>> {
    let mut out = Vec::new();
    for tree in &inputs.trees.trees {
        let split = inputs.splits.split_of(&tree.tree_id).expect("validated");
        let dir = out_dir.join(split.as_str());
        let crop = crop_scene(inputs.scene, &tree.aabb()?);
        if crop.is_empty() {
            return Err(Error::Config(format!("tree `{}` box contains no Gaussians", tree.tree_id)));
        }
        let cameras = tree_trajectory(trajectory, tree, intrinsics)?;
        let tree_fruits = fruits_of(fruits, &tree.tree_id);
        let items = par::map(&cameras, |cam| -> Result<Emitted> {
            let (rgb, depth) = render_scene(&crop, cam)?;
            let labels = labels_for(&tree_fruits, cam, &depth, opts.occlusion_threshold)?;
            write_image(
                &dir,
                split,
                cam,
                &tree.tree_id,
                Source::Rendered,
                &rgb,
                &depth,
                crop.sh_degree(),
                None,
                labels,
                opts.occlusion_limit,
            )
        });
        for item in items {
            out.push(item?);
        }
    }
    Ok(out)
}

/// Trajectory cameras around one tree, named `{tree_id}_{index:05}`.
pub fn tree_trajectory(
    trajectory: &TrajectoryConfig,
    tree: &TreeBox,
    intrinsics: Intrinsics,
) -> Result<Vec<CameraModel>> {
    let mut cfg = trajectory.clone();
    cfg.tree_origin = tree.origin().into();
    trajectory_cameras(&cfg, intrinsics, &tree.tree_id)
}

/// Looks for `{camera_id}.{png,jpg,jpeg}` in `dir`.
pub fn find_image(dir: &Path, camera_id: &str) -> Option<PathBuf> {
    ["png", "jpg", "jpeg", "JPG", "JPEG", "PNG"]
        .iter()
        .map(|ext| dir.join(format!("{camera_id}.{ext}")))
        .find(|p| p.is_file())
}

fn build_original(
    inputs: &BuildInputs<'_>,
    fruits: &[Fruit<'_>],
    cameras: &[CameraModel],
    images: Option<&Path>,
    patch_size: u32,
    opts: &BuildOptions,
    out_dir: &Path,
) -> Result<Vec<Emitted>> {
    let crops: Vec<(&TreeBox, SplatScene)> =
        inputs.trees.trees.iter().map(|t| Ok((t, crop_scene(inputs.scene, &t.aabb()?)))).collect::<Result<_>>()?;
    let per_camera = par::map(cameras, |cam| -> Result<Vec<Emitted>> {
        let (full_rgb, full_depth) = render_scene(inputs.scene, cam)?;
        let photo = match images {
            Some(dir) => {
                let path = find_image(dir, &cam.id)
                    .ok_or_else(|| Error::Config(format!("no image for camera `{}` in {}", cam.id, dir.display())))?;
                let img = RgbImage::load(&path)?;
                if (img.width, img.height) != (cam.width(), cam.height()) {
                    return Err(Error::SizeMismatch(format!(
                        "{} is {}x{}, camera `{}` expects {}x{}",
                        path.display(),
                        img.width,
                        img.height,
                        cam.id,
                        cam.width(),
                        cam.height()
                    )));
                }
                img
            }
            None => full_rgb,
        };
        let grid = generate_patch_grid(cam.width(), cam.height(), patch_size)?;
        let mut out = Vec::new();
        for (tree, crop) in &crops {
            if crop.is_empty() {
                continue;
            }
            let (_, tree_depth) = render_scene(crop, cam)?;
            if tree_depth.count_nonzero() == 0 {
                continue;
            }
            let (rgb, depth) = mask_original_image(&photo, &full_depth, &tree_depth)?;
            let split = inputs.splits.split_of(&tree.tree_id).expect("validated");
            let dir = out_dir.join(split.as_str());
            let tree_cam = CameraModel { id: format!("{}_{}", cam.id, tree.tree_id), ..cam.clone() };
            let tree_fruits = fruits_of(fruits, &tree.tree_id);
            for rect in &grid {
                let pcam = patch_camera(&tree_cam, rect);
                let scene_depth = full_depth.crop(rect);
                let labels = labels_for(&tree_fruits, &pcam, &scene_depth, opts.occlusion_threshold)?;
                out.push(write_image(
                    &dir,
                    split,
                    &pcam,
                    &tree.tree_id,
                    Source::Original,
                    &rgb.crop(rect),
                    &depth.crop(rect),
                    inputs.scene.sh_degree(),
                    Some(*rect),
                    labels,
                    opts.occlusion_limit,
                )?);
            }
        }
        Ok(out)
    });
    let mut out = Vec::new();
    for items in per_camera {
        out.extend(items?);
    }
    Ok(out)
}

/// Randomly keeps whole images until at least `target` labels are kept.
pub fn subsample_dataset(manifest: &DatasetManifest, target: usize, seed: u64) -> Result<DatasetManifest> {
    let available = manifest.counts.labels;
    if target > available {
        return Err(Error::TargetTooLarge { target, available });
    }
    let mut order: Vec<usize> = (0..manifest.images.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen = Vec::new();
    let mut achieved = 0;
    for i in order {
        if achieved >= target {
            break;
        }
        achieved += manifest.images[i].labels;
        chosen.push(i);
    }
    chosen.sort_unstable();
    let images: Vec<ImageRecord> = chosen.iter().map(|&i| manifest.images[i].clone()).collect();
    Ok(DatasetManifest {
        counts: Counts {
            images: images.len(),
            labels: achieved,
            unfiltered_labels: images.iter().map(|r| r.unfiltered_labels).sum(),
        },
        images,
        subsample: Some(SubsampleInfo { target, achieved, seed, source_labels: available }),
        ..manifest.clone()
    })
}

/// Label target for a fraction of `base` labels, rounded to the nearest label.
pub fn target_from_fraction(fraction: f64, base: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction {fraction} must be in (0, 1]")));
    }
    Ok((fraction * base as f64).round() as usize)
}

/// Subsamples the dataset in `src_dir` into `out_dir`. Image paths in the
/// new manifest point back into `src_dir`.
pub fn subsample_dir(src_dir: &Path, target: usize, seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    let manifest = DatasetManifest::load(&src_dir.join(MANIFEST_FILE))?;
    let mut sub = subsample_dataset(&manifest, target, seed)?;
    let root = std::fs::canonicalize(src_dir).map_err(|e| Error::io(src_dir, e))?;
    let keep: BTreeSet<&str> = sub.images.iter().map(|r| r.camera_id.as_str()).collect();
    let filter = |file: &str| -> Result<Vec<ImageLabel>> {
        Ok(read_labels(&src_dir.join(file))?.into_iter().filter(|l| keep.contains(l.camera_id.as_str())).collect())
    };
    let labels = filter(&manifest.label_file)?;
    let unfiltered = filter(&manifest.unfiltered_label_file)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_labels(&out_dir.join(LABELS_FILE), &labels)?;
    write_labels(&out_dir.join(UNFILTERED_LABELS_FILE), &unfiltered)?;
    let abs = |p: &str| root.join(p).to_string_lossy().into_owned();
    for r in &mut sub.images {
        r.rgb = abs(&r.rgb);
        r.depth = abs(&r.depth);
        r.sidecar = abs(&r.sidecar);
    }
    sub.label_file = LABELS_FILE.into();
    sub.unfiltered_label_file = UNFILTERED_LABELS_FILE.into();
    sub.save_atomic(&out_dir.join(MANIFEST_FILE))?;
    Ok(sub)
}

/// Re-reads a dataset directory and checks the manifest against the files.
pub fn verify_dataset(dir: &Path) -> Result<DatasetManifest> {
    let manifest = DatasetManifest::load(&dir.join(MANIFEST_FILE))?;
    let labels = read_labels(&dir.join(&manifest.label_file))?;
    let unfiltered = read_labels(&dir.join(&manifest.unfiltered_label_file))?;
    let mismatch = |what: &str, stated: usize, actual: usize| {
        Error::Config(format!("{}: manifest says {stated} {what}, found {actual}", dir.display()))
    };
    if labels.len() != manifest.counts.labels {
        return Err(mismatch("labels", manifest.counts.labels, labels.len()));
    }
    if unfiltered.len() != manifest.counts.unfiltered_labels {
        return Err(mismatch("unfiltered labels", manifest.counts.unfiltered_labels, unfiltered.len()));
    }
    if manifest.images.len() != manifest.counts.images {
        return Err(mismatch("images", manifest.counts.images, manifest.images.len()));
    }
    let mut per_image: HashMap<&str, usize> = HashMap::new();
    for l in &labels {
        *per_image.entry(l.camera_id.as_str()).or_default() += 1;
        if !manifest.trees.contains(&l.tree_id) {
            return Err(Error::Config(format!(
                "label for fruit `{}` belongs to tree `{}` outside this split",
                l.fruit_id, l.tree_id
            )));
        }
    }
    for r in &manifest.images {
        for p in [&r.rgb, &r.depth, &r.sidecar] {
            let path = dir.join(p);
            if !path.is_file() {
                return Err(Error::Config(format!("missing file {}", path.display())));
            }
        }
        let n = per_image.get(r.camera_id.as_str()).copied().unwrap_or(0);
        if n != r.labels {
            return Err(mismatch(&format!("labels for {}", r.image_id), r.labels, n));
        }
    }
    Ok(manifest)
}
