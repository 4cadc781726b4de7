use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::obb::{obb_iou, OrientedBox};
use crate::annotation::{CameraBox, ImageLabel};
use crate::error::{Error, Result};
use crate::par;

/// One predicted fruit, in camera coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub camera_id: String,
    pub confidence: f64,
    pub obb: OrientedBox,
    pub axis: Vector3<f64>,
}

/// Line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub camera_id: String,
    pub confidence: f64,
    pub center: [f64; 3],
    pub extents: [f64; 3],
    /// Box-to-camera rotation `[w, x, y, z]`.
    pub q: [f64; 4],
    pub axis: [f64; 3],
}

impl PredictionRecord {
    /// A prediction that reproduces a label exactly, with confidence 1.
    pub fn from_label(label: &ImageLabel) -> Self {
        let b = &label.obb_camera;
        Self {
            camera_id: label.camera_id.clone(),
            confidence: 1.0,
            center: b.center,
            extents: b.extents,
            q: b.q,
            axis: b.axis,
        }
    }
}

impl TryFrom<PredictionRecord> for Prediction {
    type Error = Error;

    fn try_from(r: PredictionRecord) -> Result<Self> {
        let bad = |what: String| Error::Config(format!("prediction for `{}`: {what}", r.camera_id));
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(bad(format!("confidence {} outside [0, 1]", r.confidence)));
        }
        if r.extents.iter().any(|e| !(*e > 0.0)) {
            return Err(bad("extents must be positive".into()));
        }
        let axis = Vector3::from(r.axis);
        if ((axis.norm()) - 1.0).abs() > 1e-3 {
            return Err(bad(format!("axis norm {} is not 1", axis.norm())));
        }
        let q = nalgebra::Quaternion::new(r.q[0], r.q[1], r.q[2], r.q[3]);
        if !(q.norm() > 0.0) {
            return Err(bad("zero quaternion".into()));
        }
        let b = CameraBox { center: r.center, extents: r.extents, q: r.q, axis: r.axis, centroid: None };
        Ok(Prediction { obb: OrientedBox::from(&b), camera_id: r.camera_id, confidence: r.confidence, axis })
    }
}

pub fn read_predictions(path: &std::path::Path) -> Result<Vec<Prediction>> {
    crate::annotation::read_json_lines::<PredictionRecord>(path)?.into_iter().map(Prediction::try_from).collect()
}

/// A ground-truth fruit in camera coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub camera_id: String,
    pub fruit_id: String,
    pub obb: OrientedBox,
    pub axis: Vector3<f64>,
    pub occlusion: f64,
}

impl From<&ImageLabel> for GroundTruth {
    fn from(l: &ImageLabel) -> Self {
        Self {
            camera_id: l.camera_id.clone(),
            fruit_id: l.fruit_id.clone(),
            obb: OrientedBox::from(&l.obb_camera),
            axis: Vector3::from(l.obb_camera.axis),
            occlusion: l.occlusion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

/// Indices refer to the slices given to [`match_detections`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }
    pub fn fp(&self) -> usize {
        self.false_positives.len()
    }
    pub fn fn_(&self) -> usize {
        self.false_negatives.len()
    }
}

/// Greedy matching within each camera.
///
/// Predictions go in descending confidence (ties keep input order); each
/// takes the unmatched ground truth of its camera with the highest IoU, if
/// that IoU reaches `iou_threshold`.
pub fn match_detections(preds: &[Prediction], gts: &[GroundTruth], iou_threshold: f64) -> Result<MatchResult> {
    let mut by_camera: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, p) in preds.iter().enumerate() {
        by_camera.entry(&p.camera_id).or_default().0.push(i);
    }
    for (i, g) in gts.iter().enumerate() {
        by_camera.entry(&g.camera_id).or_default().1.push(i);
    }
    let groups: Vec<(Vec<usize>, Vec<usize>)> = by_camera.into_values().collect();
    let per_image = par::map(&groups, |(p, g)| match_group(preds, gts, p, g, iou_threshold));

    let mut out = MatchResult::default();
    for r in per_image {
        let r = r?;
        out.pairs.extend(r.pairs);
        out.false_positives.extend(r.false_positives);
        out.false_negatives.extend(r.false_negatives);
    }
    out.pairs.sort_by_key(|p| p.pred);
    out.false_positives.sort_unstable();
    out.false_negatives.sort_unstable();
    Ok(out)
}

fn match_group(
    preds: &[Prediction],
    gts: &[GroundTruth],
    pred_idx: &[usize],
    gt_idx: &[usize],
    thr: f64,
) -> Result<MatchResult> {
    let mut order = pred_idx.to_vec();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));
    let mut taken = vec![false; gt_idx.len()];
    let mut out = MatchResult::default();
    for p in order {
        let mut best: Option<(usize, f64)> = None;
        for (k, &g) in gt_idx.iter().enumerate() {
            if taken[k] {
                continue;
            }
            let iou = obb_iou(&preds[p].obb, &gts[g].obb)?;
            if iou >= thr && best.map_or(true, |(_, b)| iou > b) {
                best = Some((k, iou));
            }
        }
        match best {
            Some((k, iou)) => {
                taken[k] = true;
                out.pairs.push(MatchPair { pred: p, gt: gt_idx[k], iou });
            }
            None => out.false_positives.push(p),
        }
    }
    out.false_negatives = gt_idx.iter().zip(&taken).filter(|(_, t)| !**t).map(|(g, _)| *g).collect();
    Ok(out)
}
