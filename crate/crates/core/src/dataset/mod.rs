//! YOLO-format annotated datasets: class registries, label files, summary
//! statistics and train/test splitting.

pub(crate) mod io;
mod split;
mod stats;
pub(crate) mod yolo;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::ParseError;

pub use io::{load_dataset, read_class_list, read_label_dir, write_label_dir};
pub use split::split_dataset;
pub use stats::{compute_stats, read_class_counts, summarize_counts, DatasetStats, Spread};
pub use yolo::{parse_yolo_label_file, serialize_yolo_label};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("class list is empty")]
    EmptyRegistry,
    #[error("duplicate class name {0:?}")]
    DuplicateClass(String),
    #[error("duplicate image id {0:?}")]
    DuplicateImage(String),
    #[error("image {image_id:?} references class {class_id} but only {num_classes} classes exist")]
    InvalidClass {
        image_id: String,
        class_id: usize,
        num_classes: usize,
    },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    FractionOutOfRange(f64),
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: ParseError,
    },
    #[error("count table: {0}")]
    CountTable(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Ordered class names; a class id is its position in the list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassRegistry {
    names: Vec<String>,
}

impl ClassRegistry {
    pub fn new(names: Vec<String>) -> Result<Self, DatasetError> {
        if names.is_empty() {
            return Err(DatasetError::EmptyRegistry);
        }
        let mut seen = HashSet::with_capacity(names.len());
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::DuplicateClass(name.clone()));
            }
        }
        Ok(Self { names })
    }

    /// Parses a names file: one class per line, blank lines skipped.
    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let names = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect();
        Self::new(names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn to_text(&self) -> String {
        self.names.iter().map(|n| format!("{n}\n")).collect()
    }
}

impl TryFrom<Vec<String>> for ClassRegistry {
    type Error = DatasetError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(names)
    }
}

impl From<ClassRegistry> for Vec<String> {
    fn from(r: ClassRegistry) -> Self {
        r.names
    }
}

/// Parses a class list file into a registry.
pub fn parse_class_list(text: &str) -> Result<ClassRegistry, DatasetError> {
    ClassRegistry::parse(text)
}

/// Normalized center-format box. Coordinates are fractions of image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Returns `None` unless `0 <= cx, cy <= 1` and `0 < w, h <= 1`.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Option<Self> {
        let b = Self { cx, cy, w, h };
        b.is_valid().then_some(b)
    }

    pub fn is_valid(&self) -> bool {
        let unit = 0.0..=1.0;
        unit.contains(&self.cx)
            && unit.contains(&self.cy)
            && self.w > 0.0
            && self.w <= 1.0
            && self.h > 0.0
            && self.h <= 1.0
    }

    /// `(x1, y1, x2, y2)` clamped to the unit square.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        let clamp = |v: f64| v.clamp(0.0, 1.0);
        (
            clamp(self.cx - self.w / 2.0),
            clamp(self.cy - self.h / 2.0),
            clamp(self.cx + self.w / 2.0),
            clamp(self.cy + self.h / 2.0),
        )
    }

    /// Builds a box from unit-square corners. `None` if degenerate.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Option<Self> {
        Self::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    /// Area of the clamped box.
    pub fn area(&self) -> f64 {
        let (x1, y1, x2, y2) = self.corners();
        (x2 - x1).max(0.0) * (y2 - y1).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub class_id: usize,
    pub bbox: BoundingBox,
}

/// One annotated image. `image_id` is the label file stem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub boxes: Vec<GroundTruthBox>,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>, boxes: Vec<GroundTruthBox>) -> Self {
        Self {
            image_id: image_id.into(),
            boxes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    registry: ClassRegistry,
    images: Vec<ImageRecord>,
}

impl Dataset {
    pub fn new(registry: ClassRegistry, images: Vec<ImageRecord>) -> Result<Self, DatasetError> {
        let mut ids = HashSet::with_capacity(images.len());
        for image in &images {
            if !ids.insert(image.image_id.as_str()) {
                return Err(DatasetError::DuplicateImage(image.image_id.clone()));
            }
            if let Some(b) = image.boxes.iter().find(|b| b.class_id >= registry.len()) {
                return Err(DatasetError::InvalidClass {
                    image_id: image.image_id.clone(),
                    class_id: b.class_id,
                    num_classes: registry.len(),
                });
            }
        }
        Ok(Self { registry, images })
    }

    pub fn registry(&self) -> &ClassRegistry {
        &self.registry
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn num_classes(&self) -> usize {
        self.registry.len()
    }

    pub fn total_boxes(&self) -> usize {
        self.images.iter().map(|i| i.boxes.len()).sum()
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.image_id == image_id)
    }

    /// Index from image id to position in [`Dataset::images`].
    pub fn index(&self) -> HashMap<&str, usize> {
        self.images
            .iter()
            .enumerate()
            .map(|(i, r)| (r.image_id.as_str(), i))
            .collect()
    }

    pub fn into_parts(self) -> (ClassRegistry, Vec<ImageRecord>) {
        (self.registry, self.images)
    }
}
