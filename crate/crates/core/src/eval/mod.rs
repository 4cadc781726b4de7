//! Detection and pose metrics for fruit predictions.

pub mod bootstrap;
pub mod matching;
pub mod metrics;
pub mod obb;
pub mod report;

pub use bootstrap::{bootstrap_interval, bootstrap_mean, Interval};
pub use matching::{
    match_detections, read_predictions, GroundTruth, MatchPair, MatchResult, Prediction, PredictionRecord,
};
pub use metrics::{
    bin_by_occlusion, f1_from_counts, f1_scores, neutral_f1, occlusion_bin, orientation_error, position_error,
    zero_orientation_baseline, F1Scores, NeutralF1, OrientationError, OCCLUSION_BINS,
};
pub use obb::{intersection_volume, obb_iou, OrientedBox};
pub use report::{evaluate, EvalConfig, EvalReport, ZERO_ORIENTATION_AXIS};
