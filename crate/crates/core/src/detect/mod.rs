//! Detection-results exchange format and the detector boundary.
//!
//! A detection file mirrors a YOLO label file with an extra confidence
//! column: `class_id confidence cx cy w h`, one file per image.

mod stub;

use std::collections::BTreeMap;
use std::fmt::Write;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::yolo::{parse_box, write_box};
use crate::dataset::{io, BoundingBox, ClassRegistry, DatasetError};
use crate::format::{
    content_lines, decode_utf8, parse_class_id, parse_decimal, ParseError, ParseErrorKind, Shortest,
};

pub use stub::{stub_detect, DetectorConfig, InvalidDetectorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedBox {
    pub class_id: usize,
    pub confidence: f64,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub image_id: String,
    pub predictions: Vec<PredictedBox>,
    /// Free-form tag naming the model or tool that produced the detections.
    #[serde(default)]
    pub source: String,
}

impl DetectionSet {
    pub fn new(image_id: impl Into<String>, predictions: Vec<PredictedBox>) -> Self {
        Self {
            image_id: image_id.into(),
            predictions,
            source: String::new(),
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }
}

/// Dish id to number of detections.
pub type DishCounts = BTreeMap<usize, u32>;

pub fn parse_detection_file(
    image_id: &str,
    text: &str,
    registry: &ClassRegistry,
) -> Result<DetectionSet, ParseError> {
    let predictions = content_lines(text)
        .map(|(line, fields)| {
            parse_detection_line(&fields, registry.len())
                .map_err(|kind| ParseError::new(line, kind))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DetectionSet::new(image_id, predictions))
}

fn parse_detection_line(
    fields: &[&str],
    num_classes: usize,
) -> Result<PredictedBox, ParseErrorKind> {
    if fields.len() != 6 {
        return Err(ParseErrorKind::WrongFieldCount {
            expected: 6,
            found: fields.len(),
        });
    }
    let class_id = parse_class_id(fields[0], num_classes)?;
    let confidence = parse_decimal(fields[1])?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(ParseErrorKind::ConfidenceOutOfRange(confidence));
    }
    let bbox = parse_box(&fields[2..])?;
    Ok(PredictedBox {
        class_id,
        confidence,
        bbox,
    })
}

pub fn serialize_detection_file(set: &DetectionSet) -> String {
    let mut out = String::new();
    for p in &set.predictions {
        let _ = write!(out, "{} {} ", p.class_id, Shortest(p.confidence));
        write_box(&mut out, &p.bbox);
        out.push('\n');
    }
    out
}

/// Counts detections at or above `confidence_threshold`, per class.
pub fn detections_to_counts(set: &DetectionSet, confidence_threshold: f64) -> DishCounts {
    let mut counts = DishCounts::new();
    for p in set
        .predictions
        .iter()
        .filter(|p| p.confidence >= confidence_threshold)
    {
        *counts.entry(p.class_id).or_default() += 1;
    }
    counts
}

/// Reads every `*.txt` detection file in `dir`, ordered by image id.
pub fn read_detection_dir(
    dir: &Path,
    registry: &ClassRegistry,
) -> Result<Vec<DetectionSet>, DatasetError> {
    io::list_txt_files(dir)?
        .into_iter()
        .map(|(stem, path)| {
            let bytes = fs::read(&path).map_err(io::io_err(&path))?;
            decode_utf8(&bytes)
                .and_then(|text| parse_detection_file(&stem, text, registry))
                .map_err(|e| io::parse_err(&path, e))
        })
        .collect()
}

pub fn write_detection_dir(dir: &Path, sets: &[DetectionSet]) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io::io_err(dir))?;
    for set in sets {
        let path = dir.join(format!("{}.txt", set.image_id));
        fs::write(&path, serialize_detection_file(set)).map_err(io::io_err(&path))?;
    }
    Ok(())
}
