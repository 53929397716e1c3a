use std::fmt::Write;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{ClassRegistry, Dataset, DatasetError};
use crate::format::csv_field;

/// Mean and spread of a per-class count vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single class.
    pub std: f64,
}

impl Spread {
    pub fn of(counts: &[usize]) -> Self {
        let n = counts.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                std: 0.0,
            };
        }
        let mean = counts.iter().sum::<usize>() as f64 / n as f64;
        if n == 1 {
            return Self { mean, std: 0.0 };
        }
        let ss: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum();
        Self {
            mean,
            std: (ss / (n - 1) as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    /// Images holding at least one box of the class. A multi-dish image counts once per class.
    pub per_class_image_count: Vec<usize>,
    pub per_class_annotation_count: Vec<usize>,
    pub images: Spread,
    pub annotations: Spread,
    /// Distinct images, including negatives.
    pub total_images: usize,
    pub total_annotations: usize,
    /// Sum of `per_class_image_count`; exceeds `total_images` when images hold several classes.
    pub image_count_sum: usize,
}

impl DatasetStats {
    /// Delimited per-class table followed by a blank line and a summary block.
    pub fn to_table(&self, registry: &ClassRegistry) -> String {
        let mut out = String::from("class_id,name,images,annotations\n");
        for (id, (imgs, anns)) in self
            .per_class_image_count
            .iter()
            .zip(&self.per_class_annotation_count)
            .enumerate()
        {
            let name = registry.name(id).unwrap_or("");
            let _ = writeln!(out, "{id},{},{imgs},{anns}", csv_field(name));
        }
        out.push('\n');
        let _ = writeln!(out, "classes,{}", self.per_class_image_count.len());
        let _ = writeln!(out, "total_images,{}", self.total_images);
        let _ = writeln!(out, "image_count_sum,{}", self.image_count_sum);
        let _ = writeln!(out, "total_annotations,{}", self.total_annotations);
        let _ = writeln!(out, "images_per_class_mean,{:.2}", self.images.mean);
        let _ = writeln!(out, "images_per_class_std,{:.2}", self.images.std);
        let _ = writeln!(
            out,
            "annotations_per_class_mean,{:.2}",
            self.annotations.mean
        );
        let _ = writeln!(out, "annotations_per_class_std,{:.2}", self.annotations.std);
        out
    }
}

#[derive(Deserialize)]
struct CountRow {
    name: String,
    images: usize,
    annotations: usize,
}

/// Reads a `name,images,annotations` table of per-class counts.
///
/// The distinct image total is unknown for such a table, so `total_images`
/// is taken as the image column sum.
pub fn read_class_counts(reader: impl Read) -> Result<(ClassRegistry, DatasetStats), DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let rows = rdr
        .deserialize::<CountRow>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| DatasetError::CountTable(e.to_string()))?;
    let registry = ClassRegistry::new(rows.iter().map(|r| r.name.clone()).collect())?;
    let images: Vec<usize> = rows.iter().map(|r| r.images).collect();
    let annotations = rows.iter().map(|r| r.annotations).collect();
    let total = images.iter().sum();
    Ok((registry, summarize_counts(images, annotations, total)))
}

/// Summarizes pre-tabulated per-class counts.
pub fn summarize_counts(
    per_class_images: Vec<usize>,
    per_class_annotations: Vec<usize>,
    total_images: usize,
) -> DatasetStats {
    DatasetStats {
        images: Spread::of(&per_class_images),
        annotations: Spread::of(&per_class_annotations),
        total_annotations: per_class_annotations.iter().sum(),
        image_count_sum: per_class_images.iter().sum(),
        per_class_image_count: per_class_images,
        per_class_annotation_count: per_class_annotations,
        total_images,
    }
}

pub fn compute_stats(dataset: &Dataset) -> DatasetStats {
    let n = dataset.num_classes();
    let mut images = vec![0usize; n];
    let mut annotations = vec![0usize; n];
    let mut seen = vec![false; n];
    for record in dataset.images() {
        seen.fill(false);
        for b in &record.boxes {
            annotations[b.class_id] += 1;
            if !seen[b.class_id] {
                seen[b.class_id] = true;
                images[b.class_id] += 1;
            }
        }
    }
    summarize_counts(images, annotations, dataset.images().len())
}
