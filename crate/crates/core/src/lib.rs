//! Dataset tooling, detection and classification metrics, and calorie
//! tracking for dish-detection pipelines.
//!
//! * [`dataset`]: YOLO label files, class registries, statistics, splits.
//! * [`detect`]: the detection exchange format and a seeded stub detector.
//! * [`eval`]: IoU matching, precision/recall/F1, AP/mAP, curves, confusion matrices.
//! * [`nutrition`]: BMR, calorie goals, meal logging and the daily tracker.

pub mod dataset;
pub mod detect;
pub mod eval;
pub mod format;
pub mod nutrition;

pub use dataset::{BoundingBox, ClassRegistry, Dataset, GroundTruthBox, ImageRecord};
pub use detect::{DetectionSet, DishCounts, PredictedBox};
pub use format::{ParseError, ParseErrorKind};
