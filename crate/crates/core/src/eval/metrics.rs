use std::collections::HashSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::matching::{match_detections, GroundTruth, MatchResult, Prediction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision is 1 with no predictions, recall is 1 with no ground truth,
/// and F1 is 0 when both are 0.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> F1Scores {
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    F1Scores { precision, recall, f1: harmonic(precision, recall) }
}

pub(crate) fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn f1_scores(m: &MatchResult) -> F1Scores {
    f1_from_counts(m.tp(), m.fp(), m.fn_())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeutralF1 {
    /// Scores against the filtered ground truth.
    pub filtered: F1Scores,
    /// Precision of the same predictions against the full ground truth.
    pub neutral_precision: f64,
    pub neutral_f1: f64,
}

/// F1 whose precision is measured against every label while recall uses
/// only the filtered labels, so detecting a fruit that was filtered out
/// (too occluded) is not a false positive.
pub fn neutral_f1(
    preds: &[Prediction],
    filtered: &[GroundTruth],
    full: &[GroundTruth],
    iou_threshold: f64,
) -> Result<NeutralF1> {
    check_subset(filtered, full)?;
    let against_filtered = match_detections(preds, filtered, iou_threshold)?;
    let against_full = match_detections(preds, full, iou_threshold)?;
    Ok(neutral_from_matches(&against_filtered, &against_full))
}

pub(crate) fn neutral_from_matches(filtered: &MatchResult, full: &MatchResult) -> NeutralF1 {
    let scores = f1_scores(filtered);
    let neutral_precision = f1_scores(full).precision;
    NeutralF1 { filtered: scores, neutral_precision, neutral_f1: harmonic(neutral_precision, scores.recall) }
}

pub(crate) fn check_subset(filtered: &[GroundTruth], full: &[GroundTruth]) -> Result<()> {
    let keys: HashSet<(&str, &str)> = full.iter().map(|g| (g.camera_id.as_str(), g.fruit_id.as_str())).collect();
    match filtered.iter().find(|g| !keys.contains(&(g.camera_id.as_str(), g.fruit_id.as_str()))) {
        Some(g) => Err(Error::NotSubset(format!(
            "fruit `{}` in camera `{}` is missing from the full set",
            g.fruit_id, g.camera_id
        ))),
        None => Ok(()),
    }
}

/// Euclidean distance between box centers, meters.
pub fn position_error(gt_center: &Vector3<f64>, pred_center: &Vector3<f64>) -> f64 {
    (gt_center - pred_center).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationError {
    /// Angle between the two axis vectors.
    pub angle_deg: f64,
    /// Difference in elevation above the XY-plane.
    pub pitch_deg: f64,
    /// Difference in azimuth about +Z, wrapped to `[0, 180]`.
    pub yaw_deg: f64,
}

fn unit(v: &Vector3<f64>) -> Result<Vector3<f64>> {
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(v / n)
}

/// Directional angle between fruit axis vectors, with pitch and yaw parts.
pub fn orientation_error(gt_axis: &Vector3<f64>, pred_axis: &Vector3<f64>) -> Result<OrientationError> {
    let (a, b) = (unit(gt_axis)?, unit(pred_axis)?);
    let angle = a.dot(&b).clamp(-1.0, 1.0).acos();
    let elevation = |v: &Vector3<f64>| v.z.clamp(-1.0, 1.0).asin();
    let azimuth = |v: &Vector3<f64>| v.y.atan2(v.x);
    let mut dyaw = (azimuth(&a) - azimuth(&b)).abs() % std::f64::consts::TAU;
    if dyaw > std::f64::consts::PI {
        dyaw = std::f64::consts::TAU - dyaw;
    }
    Ok(OrientationError {
        angle_deg: angle.to_degrees(),
        pitch_deg: (elevation(&a) - elevation(&b)).abs().to_degrees(),
        yaw_deg: dyaw.to_degrees(),
    })
}

/// Occlusion bins, most occluded first; everything under 30 % is one bin.
pub const OCCLUSION_BINS: [(f64, f64); 8] =
    [(90.0, 100.0), (80.0, 90.0), (70.0, 80.0), (60.0, 70.0), (50.0, 60.0), (40.0, 50.0), (30.0, 40.0), (0.0, 30.0)];

pub fn bin_label(bin: usize) -> String {
    let (lo, hi) = OCCLUSION_BINS[bin];
    if bin == 0 {
        format!("[{lo}, {hi}]")
    } else {
        format!("[{lo}, {hi})")
    }
}

/// Bin index for an occlusion rate; bins include their lower edge and the
/// top bin also includes 100.
pub fn occlusion_bin(occlusion: f64) -> Result<usize> {
    if !(0.0..=100.0).contains(&occlusion) {
        return Err(Error::OcclusionOutOfRange(occlusion));
    }
    if occlusion < 30.0 {
        return Ok(7);
    }
    if occlusion >= 90.0 {
        return Ok(0);
    }
    Ok(9 - (occlusion / 10.0).floor() as usize)
}

/// Groups instance indices by occlusion bin.
pub fn bin_by_occlusion(occlusions: &[f64]) -> Result<[Vec<usize>; 8]> {
    let mut bins: [Vec<usize>; 8] = Default::default();
    for (i, &o) in occlusions.iter().enumerate() {
        bins[occlusion_bin(o)?].push(i);
    }
    Ok(bins)
}

/// Mean angle between each ground-truth axis and a fixed reference axis,
/// i.e. the error of a predictor that always outputs zero rotation.
pub fn zero_orientation_baseline(gt_axes: &[Vector3<f64>], reference: &Vector3<f64>) -> Result<f64> {
    if gt_axes.is_empty() {
        return Err(Error::EmptyInput("ground-truth axes"));
    }
    let mut sum = 0.0;
    for a in gt_axes {
        sum += orientation_error(a, reference)?.angle_deg;
    }
    Ok(sum / gt_axes.len() as f64)
}
