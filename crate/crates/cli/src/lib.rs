//! Command-line front end. `main.rs` only parses and calls [`run`].

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use splatlabel::annotation::{compute_occlusion, load_annotations, read_labels, AnnotationRecord, OCCLUSION_THRESHOLD};
use splatlabel::camera::{
    generate_patch_grid, load_cameras, patch_camera, save_cameras, CameraModel, Intrinsics, TrajectoryConfig,
};
use splatlabel::dataset::{
    build_dataset, mask_original_image, subsample_dir, target_from_fraction, verify_dataset, BuildInputs, BuildOptions,
    SplitConfig, ViewSource, DEFAULT_PATCH_SIZE,
};
use splatlabel::eval::{evaluate, read_predictions, EvalConfig};
use splatlabel::ply::Format;
use splatlabel::render::{render_scene, RenderSidecar, RgbImage};
use splatlabel::splat::{
    crop_scene, read_splat_file, sample_point_cloud, write_point_cloud, write_splat_file, Aabb, SplatScene, TreesFile,
};
use splatlabel::synth::{
    generate_orchard, orchard_cameras, orchard_split, random_split, small_trajectory, write_orchard, SynthConfig,
};
use splatlabel_server::{AppState, ServerConfig};

#[derive(Debug, Parser)]
#[command(name = "splatlabel", version, about = "Fruit pose datasets from Gaussian-splat orchard scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build train/val/test datasets with labels and manifests.
    BuildDataset(BuildArgs),
    /// Black out everything in a photo that is not the given tree.
    Mask(MaskArgs),
    /// Cut an image into overlapping square patches.
    Patch(PatchArgs),
    /// Occlusion rate of one annotated fruit in each camera.
    Occlusion(OcclusionArgs),
    /// Render RGB, depth and a sidecar per camera.
    Render(RenderArgs),
    /// Keep only the Gaussians inside a box.
    Crop(CropArgs),
    /// Sample a colored point cloud from a splat scene.
    Convert(ConvertArgs),
    /// Draw a smaller dataset with a target label count.
    Subsample(SubsampleArgs),
    /// Write a small synthetic orchard with annotations and cameras.
    Synth(SynthArgs),
    /// Score predictions against ground-truth labels.
    Eval(EvalArgs),
    /// Check a built dataset against its manifest.
    Verify(VerifyArgs),
    /// Serve the annotation API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Rendered,
    Original,
}

#[derive(Debug, Args)]
pub struct IntrinsicsArgs {
    /// Rendered image width, px.
    #[arg(long, default_value_t = 1300)]
    pub width: u32,
    #[arg(long, default_value_t = 1300)]
    pub height: u32,
    /// Focal length, px; principal point is the image center.
    #[arg(long, default_value_t = 1100.0)]
    pub focal: f64,
}

impl IntrinsicsArgs {
    fn intrinsics(&self) -> Result<Intrinsics> {
        Ok(Intrinsics::new(
            self.focal,
            self.focal,
            self.width as f64 / 2.0,
            self.height as f64 / 2.0,
            self.width,
            self.height,
        )?)
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub trees: PathBuf,
    /// Directory of annotation JSON files and their point clouds.
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Orbit config for rendered mode; the orchard default grid when omitted.
    #[arg(long, conflicts_with = "cameras")]
    pub trajectory: Option<PathBuf>,
    /// Registered photo cameras for original mode.
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    /// Photos named `{camera_id}.png|jpg`; the full-scene render stands in when omitted.
    #[arg(long, requires = "cameras")]
    pub images: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
    pub patch_size: u32,
    /// Labels above this occlusion (percent) go only to the unfiltered file.
    #[arg(long, default_value_t = 100.0)]
    pub occlusion_limit: f64,
    /// Meters by which the scene must be nearer than the fruit to occlude it.
    #[arg(long, default_value_t = OCCLUSION_THRESHOLD)]
    pub occlusion_threshold: f64,
    #[arg(long)]
    pub split_config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub intrinsics: IntrinsicsArgs,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub trees: PathBuf,
    #[arg(long)]
    pub tree_id: String,
    #[arg(long)]
    pub cameras: PathBuf,
    #[arg(long)]
    pub camera_id: String,
    /// Photo to mask; the full-scene render is used when omitted.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub out_rgb: PathBuf,
    #[arg(long)]
    pub out_depth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PatchArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
    pub size: u32,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write patch cameras derived from this camera file.
    #[arg(long, requires = "camera_id")]
    pub cameras: Option<PathBuf>,
    #[arg(long)]
    pub camera_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct OcclusionArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// One annotation JSON file.
    #[arg(long)]
    pub annotation: PathBuf,
    #[arg(long)]
    pub cameras: PathBuf,
    /// Only this camera; every camera when omitted.
    #[arg(long)]
    pub camera_id: Option<String>,
    #[arg(long, default_value_t = OCCLUSION_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub cameras: PathBuf,
    #[arg(long)]
    pub camera_id: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CropArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, requires = "tree_id", conflicts_with_all = ["min", "max"])]
    pub trees: Option<PathBuf>,
    #[arg(long)]
    pub tree_id: Option<String>,
    /// Box corner as `x,y,z`.
    #[arg(long, value_parser = parse_point, requires = "max")]
    pub min: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_point, requires = "min")]
    pub max: Option<[f64; 3]>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_point(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected x,y,z, got {} values", v.len()))
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 1_000_000)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub ascii: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SubsampleArgs {
    /// Dataset directory holding `manifest.json`.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, required_unless_present = "fraction", conflicts_with = "fraction")]
    pub target: Option<usize>,
    #[arg(long, requires = "base")]
    pub fraction: Option<f64>,
    /// Label count the fraction refers to.
    #[arg(long)]
    pub base: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitKind {
    /// 7 train, 3 val, 3 test trees; needs 13 trees.
    Orchard,
    Random,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    pub trees: usize,
    #[arg(long, default_value_t = 3)]
    pub fruits_per_tree: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SplitKind::Random)]
    pub split: SplitKind,
    /// Photo cameras per tree written to `cameras.json`.
    #[arg(long, default_value_t = 2)]
    pub cameras_per_tree: usize,
    /// Yaw steps of the small trajectory written to `trajectory.json`.
    #[arg(long, default_value_t = 4)]
    pub yaws: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub intrinsics: IntrinsicsArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    #[arg(long, default_value_t = 100.0)]
    pub test_occlusion_limit: f64,
    #[arg(long, default_value_t = EvalConfig::default().replicates)]
    pub replicates: usize,
    #[arg(long, default_value_t = EvalConfig::default().level)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub dataset: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Full-resolution scene point cloud.
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, default_value_t = splatlabel_server::DEFAULT_MAX_DISPLAY_POINTS)]
    pub max_display_points: usize,
    #[arg(long, default_value_t = splatlabel_server::DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildDataset(a) => build(a),
        Command::Mask(a) => mask(a),
        Command::Patch(a) => patch(a),
        Command::Occlusion(a) => occlusion(a),
        Command::Render(a) => render(a),
        Command::Crop(a) => crop(a),
        Command::Convert(a) => convert(a),
        Command::Subsample(a) => subsample(a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => eval(a),
        Command::Verify(a) => {
            let m = verify_dataset(&a.dataset)?;
            println!("{}: {} images, {} labels", a.dataset.display(), m.counts.images, m.counts.labels);
            Ok(())
        }
        Command::Serve(a) => serve(a),
    }
}

fn load_scene(path: &Path) -> Result<SplatScene> {
    read_splat_file(path).with_context(|| format!("reading scene {}", path.display()))
}

fn select_cameras(path: &Path, id: Option<&str>) -> Result<Vec<CameraModel>> {
    let cams = load_cameras(path)?;
    match id {
        None => Ok(cams),
        Some(id) => {
            let cam =
                cams.into_iter().find(|c| c.id == id).ok_or_else(|| anyhow!("no camera {id} in {}", path.display()))?;
            Ok(vec![cam])
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn build(a: BuildArgs) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let trees = TreesFile::load(&a.trees)?;
    let annotations = load_annotations(&a.annotations)?;
    let splits = SplitConfig::load(&a.split_config)?;
    let views = match a.mode {
        Mode::Rendered => {
            if a.cameras.is_some() {
                bail!("--cameras belongs to original mode");
            }
            let trajectory = match &a.trajectory {
                Some(p) => TrajectoryConfig::load(p)?,
                None => TrajectoryConfig::orchard_default([0.0; 3]),
            };
            let intrinsics = match trajectory.intrinsics {
                Some(k) => k,
                None => a.intrinsics.intrinsics()?,
            };
            ViewSource::Rendered { trajectory, intrinsics }
        }
        Mode::Original => {
            let cams = a.cameras.as_ref().ok_or_else(|| anyhow!("original mode needs --cameras"))?;
            ViewSource::Original { cameras: load_cameras(cams)?, images: a.images.clone(), patch_size: a.patch_size }
        }
    };
    let opts = BuildOptions { occlusion_limit: a.occlusion_limit, occlusion_threshold: a.occlusion_threshold };
    let inputs = BuildInputs { scene: &scene, trees: &trees, annotations: &annotations, splits: &splits };
    let manifests = build_dataset(&inputs, &views, &opts, &a.out)?;
    for m in &manifests {
        println!(
            "{}: {} images, {} labels ({} before the occlusion limit)",
            m.split, m.counts.images, m.counts.labels, m.counts.unfiltered_labels
        );
    }
    Ok(())
}

fn mask(a: MaskArgs) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let trees = TreesFile::load(&a.trees)?;
    let tree = trees.get(&a.tree_id).ok_or_else(|| anyhow!("no tree {} in {}", a.tree_id, a.trees.display()))?;
    let cam = select_cameras(&a.cameras, Some(&a.camera_id))?.remove(0);
    let (full_rgb, full_depth) = render_scene(&scene, &cam)?;
    let cropped = crop_scene(&scene, &tree.aabb()?);
    let (_, tree_depth) = if cropped.is_empty() {
        (full_rgb.clone(), splatlabel::render::DepthImage::empty(cam.width(), cam.height()))
    } else {
        render_scene(&cropped, &cam)?
    };
    let photo = match &a.image {
        Some(p) => RgbImage::load(p)?,
        None => full_rgb,
    };
    let (rgb, depth) = mask_original_image(&photo, &full_depth, &tree_depth)?;
    rgb.save_png(&a.out_rgb)?;
    if let Some(p) = &a.out_depth {
        depth.save_png(p)?;
    }
    println!("{} tree pixels kept", depth.count_nonzero());
    Ok(())
}

fn patch(a: PatchArgs) -> Result<()> {
    let img = RgbImage::load(&a.image)?;
    let grid = generate_patch_grid(img.width, img.height, a.size)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let stem = a.image.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    for r in &grid {
        img.crop(r).save_png(&a.out.join(format!("{stem}_r{}c{}.png", r.row, r.col)))?;
    }
    if let (Some(cams), Some(id)) = (&a.cameras, &a.camera_id) {
        let cam = select_cameras(cams, Some(id))?.remove(0);
        if (cam.width(), cam.height()) != (img.width, img.height) {
            bail!("camera {id} is {}x{}, image is {}x{}", cam.width(), cam.height(), img.width, img.height);
        }
        let patches: Vec<CameraModel> = grid.iter().map(|r| patch_camera(&cam, r)).collect();
        save_cameras(&a.out.join("cameras.json"), &patches)?;
    }
    write_json(&a.out.join("patches.json"), &grid)?;
    println!("{} patches", grid.len());
    Ok(())
}

fn occlusion(a: OcclusionArgs) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let dir = a.annotation.parent().unwrap_or(Path::new("."));
    let ann = AnnotationRecord::load(&a.annotation)?.resolve(dir)?;
    for cam in select_cameras(&a.cameras, a.camera_id.as_deref())? {
        let line = match compute_occlusion(&ann, &scene, &cam, a.threshold) {
            Ok(o) => serde_json::json!({
                "camera_id": cam.id, "fruit_id": ann.fruit_id, "occlusion": o.rate, "s_T": o.s_t, "s_O": o.s_o,
            }),
            Err(splatlabel::Error::NotVisible { .. }) => {
                serde_json::json!({ "camera_id": cam.id, "fruit_id": ann.fruit_id, "occlusion": null })
            }
            Err(e) => return Err(e.into()),
        };
        println!("{line}");
    }
    Ok(())
}

fn render(a: RenderArgs) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let cams = select_cameras(&a.cameras, a.camera_id.as_deref())?;
    for cam in &cams {
        let (rgb, depth) = render_scene(&scene, cam)?;
        rgb.save_png(&a.out.join(format!("{}.png", cam.id)))?;
        depth.save_png(&a.out.join(format!("{}_depth.png", cam.id)))?;
        RenderSidecar::new(&cam.id, cam.width(), cam.height(), scene.sh_degree())
            .save(&a.out.join(format!("{}.json", cam.id)))?;
    }
    println!("rendered {} views", cams.len());
    Ok(())
}

fn crop(a: CropArgs) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let bounds = match (&a.trees, &a.tree_id, &a.min, &a.max) {
        (Some(trees), Some(id), _, _) => {
            let trees = TreesFile::load(trees)?;
            trees.get(id).ok_or_else(|| anyhow!("no tree {id}"))?.aabb()?
        }
        (_, _, Some(min), Some(max)) => Aabb::new(*min, *max)?,
        _ => bail!("give --trees with --tree-id, or --min and --max"),
    };
    let out = crop_scene(&scene, &bounds);
    if out.is_empty() {
        bail!("no Gaussians inside the box");
    }
    std::fs::write(&a.out, write_splat_file(&out)).with_context(|| format!("writing {}", a.out.display()))?;
    println!("kept {} of {} Gaussians", out.len(), scene.len());
    Ok(())
}

fn convert(a: ConvertArgs) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let cloud = sample_point_cloud(&scene, a.points, a.seed)?;
    let format = if a.ascii { Format::Ascii } else { Format::BinaryLittleEndian };
    std::fs::write(&a.out, write_point_cloud(&cloud, format))
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} points", cloud.len());
    Ok(())
}

fn subsample(a: SubsampleArgs) -> Result<()> {
    let target = match (a.target, a.fraction, a.base) {
        (Some(t), _, _) => t,
        (None, Some(f), Some(b)) => target_from_fraction(f, b)?,
        _ => bail!("give --target, or --fraction with --base"),
    };
    let m = subsample_dir(&a.dataset, target, a.seed, &a.out)?;
    println!("{} images, {} labels (target {target})", m.counts.images, m.counts.labels);
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig { trees: a.trees, fruits_per_tree: a.fruits_per_tree, seed: a.seed, ..Default::default() };
    let orchard = generate_orchard(&cfg)?;
    let ids: Vec<String> = orchard.trees.trees.iter().map(|t| t.tree_id.clone()).collect();
    let splits = match a.split {
        SplitKind::Orchard => orchard_split(&ids),
        SplitKind::Random => random_split(&ids, a.seed),
    };
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let files = write_orchard(&orchard, &splits, &a.out)?;
    let k = a.intrinsics.intrinsics()?;
    save_cameras(&a.out.join("cameras.json"), &orchard_cameras(&orchard, k, a.cameras_per_tree))?;
    write_json(&a.out.join("trajectory.json"), &small_trajectory(a.yaws, 3.0, k))?;
    let cloud = sample_point_cloud(&orchard.scene, 200_000, a.seed)?;
    std::fs::write(a.out.join("cloud.ply"), write_point_cloud(&cloud, Format::BinaryLittleEndian))
        .context("writing cloud.ply")?;
    println!(
        "{} trees, {} fruits, {} Gaussians in {}",
        ids.len(),
        orchard.annotations.len(),
        orchard.scene.len(),
        files.scene.display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let labels = read_labels(&a.gt)?;
    let preds = read_predictions(&a.pred)?;
    let cfg = EvalConfig {
        iou_threshold: a.iou,
        test_occlusion_limit: a.test_occlusion_limit,
        replicates: a.replicates,
        level: a.level,
        seed: a.seed,
        ..Default::default()
    };
    let report = evaluate(&labels, &preds, &cfg)?;
    match &a.report {
        Some(p) => report.save(p)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    eprintln!(
        "F1 {:.4} [{:.4}, {:.4}]  neutral F1 {:.4}  TP {} FP {} FN {}",
        report.f1, report.f1_ci.low, report.f1_ci.high, report.neutral_f1, report.tp, report.fp, report.fn_
    );
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let mut cfg = ServerConfig::new(&a.annotations);
    cfg.max_display_points = a.max_display_points;
    cfg.chunk_size = a.chunk_size;
    let state = AppState::load(&a.cloud, cfg)?;
    eprintln!("serving {} on http://{}", a.cloud.display(), a.addr);
    tokio::runtime::Runtime::new()?.block_on(splatlabel_server::serve(state, a.addr))?;
    Ok(())
}
