//! Detection and multi-label classification metrics.
//!
//! Detections are matched to ground truth per image and per class at an IoU
//! threshold (0.5 by default). Precision, recall and F1 are reported at a
//! confidence threshold; AP integrates the monotone precision envelope over
//! recall using every confidence, and mAP averages AP over the classes that
//! have ground truth.

mod ap;
mod classification;
mod confusion;
mod iou;
mod matching;
mod prf;
mod report;
mod sweep;

use thiserror::Error;

use crate::dataset::GroundTruthBox;
use crate::detect::PredictedBox;

pub use ap::{
    ap_from_hits, average_precision, mean_average_precision, pr_points, precision_envelope,
    PrPoint, RankedHit,
};
pub use classification::{
    classification_metrics, label_samples, read_probability_table, LabelSample,
};
pub use confusion::{confusion_matrix, image_confusion, ConfusionMatrix};
pub use iou::iou;
pub use matching::{match_detections, ClassCounts, MatchOutcome, MatchedPair, PredictionOutcome};
pub use prf::{precision_recall_f1, Prf, PrfSummary};
pub use report::{
    evaluate_detections, evaluate_images, pair_detections, ClassMetrics, EvalOptions,
    MetricsReport, ReportSettings, Summary, Task, AP_METHOD,
};
pub use sweep::{confidence_sweep, BestF1, Curve, SweepCurves, PR_GRID_POINTS};

/// One image's ground truth and predictions.
#[derive(Debug, Clone, Copy)]
pub struct EvalImage<'a> {
    pub gt: &'a [GroundTruthBox],
    pub preds: &'a [PredictedBox],
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no class has ground truth, mAP is undefined")]
    NoEvaluableClasses,
    #[error("{name} = {value} must lie in [0, 1]")]
    InvalidThreshold { name: &'static str, value: f64 },
    #[error("detections for unknown image {0:?}")]
    UnknownImage(String),
    #[error("more than one detection set for image {0:?}")]
    DuplicateDetections(String),
    #[error("image {image_id:?}: class {class_id} out of range")]
    ClassOutOfRange { image_id: String, class_id: usize },
    #[error("image {image_id:?}: expected {expected} probabilities, found {found}")]
    LengthMismatch {
        image_id: String,
        expected: usize,
        found: usize,
    },
    #[error("image {image_id:?}: probability {value} for class {class_id} outside [0, 1]")]
    ProbabilityOutOfRange {
        image_id: String,
        class_id: usize,
        value: f64,
    },
    #[error("probability table: {0}")]
    Table(String),
}
