use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_interval, bootstrap_mean, quantile, Interval, DEFAULT_LEVEL, DEFAULT_REPLICATES};
use super::matching::{match_detections, GroundTruth, MatchResult, Prediction};
use super::metrics::{
    bin_label, check_subset, f1_from_counts, harmonic, neutral_from_matches, occlusion_bin, orientation_error,
    position_error, zero_orientation_baseline, OCCLUSION_BINS,
};
use crate::annotation::ImageLabel;
use crate::error::Result;

/// Box axis of a prediction with zero rotation, in camera coordinates.
pub const ZERO_ORIENTATION_AXIS: [f64; 3] = [1.0, 0.0, 0.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Ground truth above this occlusion (percent) is left out of recall.
    pub test_occlusion_limit: f64,
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    pub zero_orientation_axis: [f64; 3],
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            test_occlusion_limit: 100.0,
            replicates: DEFAULT_REPLICATES,
            level: DEFAULT_LEVEL,
            seed: 0,
            zero_orientation_axis: ZERO_ORIENTATION_AXIS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub count: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    /// Bootstrap interval of the mean, resampling instances.
    pub mean_ci: Option<Interval>,
}

impl ErrorSummary {
    fn new(values: &[f64], cfg: &EvalConfig, stream: u64) -> Result<Self> {
        if values.is_empty() {
            return Ok(Self { count: 0, mean: None, median: None, mean_ci: None });
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            count: values.len(),
            mean: Some(values.iter().sum::<f64>() / values.len() as f64),
            median: Some(quantile(&sorted, 0.5)),
            mean_ci: Some(bootstrap_mean(values, cfg.replicates, cfg.level, cfg.seed ^ stream)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub bin: String,
    pub low: f64,
    pub high: f64,
    pub instances: usize,
    pub detected: usize,
    pub recall: Option<f64>,
    pub recall_ci: Option<Interval>,
    pub position_error_m: ErrorSummary,
    pub orientation_error_deg: ErrorSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub images: usize,
    pub predictions: usize,
    pub ground_truth_full: usize,
    pub ground_truth_filtered: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub neutral_precision: f64,
    pub neutral_f1: f64,
    /// Bootstrap intervals resampling images.
    pub f1_ci: Interval,
    pub neutral_f1_ci: Interval,
    pub position_error_m: ErrorSummary,
    pub orientation_error_deg: ErrorSummary,
    pub pitch_error_deg: ErrorSummary,
    pub yaw_error_deg: ErrorSummary,
    /// Recall and pose errors per occlusion bin, matched against all labels.
    pub bins: Vec<BinReport>,
    /// Mean angle of the filtered ground truth to the zero-rotation axis.
    pub zero_orientation_baseline_deg: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct ImageCounts {
    tp: usize,
    fp: usize,
    fn_: usize,
    full_tp: usize,
    full_fp: usize,
}

fn per_image_counts(
    preds: &[Prediction],
    filtered: &[GroundTruth],
    full: &[GroundTruth],
    m_filtered: &MatchResult,
    m_full: &MatchResult,
) -> Vec<ImageCounts> {
    let mut map: BTreeMap<&str, ImageCounts> = BTreeMap::new();
    for g in full {
        map.entry(&g.camera_id).or_default();
    }
    for p in &m_filtered.pairs {
        map.entry(&preds[p.pred].camera_id).or_default().tp += 1;
    }
    for &p in &m_filtered.false_positives {
        map.entry(&preds[p].camera_id).or_default().fp += 1;
    }
    for &g in &m_filtered.false_negatives {
        map.entry(&filtered[g].camera_id).or_default().fn_ += 1;
    }
    for p in &m_full.pairs {
        map.entry(&preds[p.pred].camera_id).or_default().full_tp += 1;
    }
    for &p in &m_full.false_positives {
        map.entry(&preds[p].camera_id).or_default().full_fp += 1;
    }
    map.into_values().collect()
}

fn summed(sample: &[&ImageCounts]) -> ImageCounts {
    sample.iter().fold(ImageCounts::default(), |a, c| ImageCounts {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        fn_: a.fn_ + c.fn_,
        full_tp: a.full_tp + c.full_tp,
        full_fp: a.full_fp + c.full_fp,
    })
}

/// Scores predictions against labels.
pub fn evaluate(labels: &[ImageLabel], preds: &[Prediction], cfg: &EvalConfig) -> Result<EvalReport> {
    let full: Vec<GroundTruth> = labels.iter().map(GroundTruth::from).collect();
    let filtered: Vec<GroundTruth> = full.iter().filter(|g| g.occlusion <= cfg.test_occlusion_limit).cloned().collect();
    check_subset(&filtered, &full)?;
    let m_filtered = match_detections(preds, &filtered, cfg.iou_threshold)?;
    let m_full = match_detections(preds, &full, cfg.iou_threshold)?;
    let neutral = neutral_from_matches(&m_filtered, &m_full);

    let images = per_image_counts(preds, &filtered, &full, &m_filtered, &m_full);
    let (f1_ci, neutral_f1_ci) = if images.is_empty() {
        let p = Interval { low: neutral.filtered.f1, high: neutral.filtered.f1 };
        (p, Interval { low: neutral.neutral_f1, high: neutral.neutral_f1 })
    } else {
        let f1 = bootstrap_interval(
            &images,
            |s| {
                let c = summed(s);
                f1_from_counts(c.tp, c.fp, c.fn_).f1
            },
            cfg.replicates,
            cfg.level,
            cfg.seed,
        )?;
        let nf1 = bootstrap_interval(
            &images,
            |s| {
                let c = summed(s);
                let r = f1_from_counts(c.tp, c.fp, c.fn_).recall;
                harmonic(f1_from_counts(c.full_tp, c.full_fp, 0).precision, r)
            },
            cfg.replicates,
            cfg.level,
            cfg.seed,
        )?;
        (f1, nf1)
    };

    let mut pos = Vec::new();
    let mut ang = Vec::new();
    let mut pitch = Vec::new();
    let mut yaw = Vec::new();
    for p in &m_filtered.pairs {
        let (pr, gt) = (&preds[p.pred], &filtered[p.gt]);
        pos.push(position_error(&gt.obb.center, &pr.obb.center));
        let o = orientation_error(&gt.axis, &pr.axis)?;
        ang.push(o.angle_deg);
        pitch.push(o.pitch_deg);
        yaw.push(o.yaw_deg);
    }

    let bins = bin_report(preds, &full, &m_full, cfg)?;
    let axes: Vec<Vector3<f64>> = filtered.iter().map(|g| g.axis).collect();
    let zero = if axes.is_empty() {
        None
    } else {
        Some(zero_orientation_baseline(&axes, &Vector3::from(cfg.zero_orientation_axis))?)
    };

    Ok(EvalReport {
        config: cfg.clone(),
        images: images.len(),
        predictions: preds.len(),
        ground_truth_full: full.len(),
        ground_truth_filtered: filtered.len(),
        tp: m_filtered.tp(),
        fp: m_filtered.fp(),
        fn_: m_filtered.fn_(),
        precision: neutral.filtered.precision,
        recall: neutral.filtered.recall,
        f1: neutral.filtered.f1,
        neutral_precision: neutral.neutral_precision,
        neutral_f1: neutral.neutral_f1,
        f1_ci,
        neutral_f1_ci,
        position_error_m: ErrorSummary::new(&pos, cfg, 1)?,
        orientation_error_deg: ErrorSummary::new(&ang, cfg, 2)?,
        pitch_error_deg: ErrorSummary::new(&pitch, cfg, 3)?,
        yaw_error_deg: ErrorSummary::new(&yaw, cfg, 4)?,
        bins,
        zero_orientation_baseline_deg: zero,
    })
}

fn bin_report(
    preds: &[Prediction],
    full: &[GroundTruth],
    m_full: &MatchResult,
    cfg: &EvalConfig,
) -> Result<Vec<BinReport>> {
    let mut matched: Vec<Option<usize>> = vec![None; full.len()];
    for p in &m_full.pairs {
        matched[p.gt] = Some(p.pred);
    }
    let mut members: [Vec<usize>; 8] = Default::default();
    for (i, g) in full.iter().enumerate() {
        members[occlusion_bin(g.occlusion)?].push(i);
    }
    let mut out = Vec::with_capacity(8);
    for (b, idx) in members.iter().enumerate() {
        let hits: Vec<f64> = idx.iter().map(|&i| matched[i].is_some() as u8 as f64).collect();
        let mut pos = Vec::new();
        let mut ang = Vec::new();
        for &i in idx {
            if let Some(p) = matched[i] {
                pos.push(position_error(&full[i].obb.center, &preds[p].obb.center));
                ang.push(orientation_error(&full[i].axis, &preds[p].axis)?.angle_deg);
            }
        }
        let detected = pos.len();
        let stream = 100 + 10 * b as u64;
        out.push(BinReport {
            bin: bin_label(b),
            low: OCCLUSION_BINS[b].0,
            high: OCCLUSION_BINS[b].1,
            instances: idx.len(),
            detected,
            recall: (!idx.is_empty()).then(|| detected as f64 / idx.len() as f64),
            recall_ci: if hits.is_empty() {
                None
            } else {
                Some(bootstrap_mean(&hits, cfg.replicates, cfg.level, cfg.seed ^ stream)?)
            },
            position_error_m: ErrorSummary::new(&pos, cfg, stream + 1)?,
            orientation_error_deg: ErrorSummary::new(&ang, cfg, stream + 2)?,
        });
    }
    Ok(out)
}

impl EvalReport {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| crate::Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| crate::Error::io(path, e))
    }
}
