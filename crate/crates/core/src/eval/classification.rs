use std::collections::BTreeSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::ap::{ap_from_hits, RankedHit};
use super::matching::ClassCounts;
use super::report::{assemble, MetricsReport, ReportSettings, Task, AP_METHOD};
use super::EvalError;
use crate::dataset::{ClassRegistry, Dataset};

/// Per-image class probabilities with the true label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSample {
    pub image_id: String,
    pub probabilities: Vec<f64>,
    pub labels: BTreeSet<usize>,
}

/// Multi-label metrics. A class is predicted when its probability is at
/// or above `prob_threshold`; AP ranks images by class probability.
pub fn classification_metrics(
    samples: &[LabelSample],
    registry: &ClassRegistry,
    prob_threshold: f64,
) -> Result<MetricsReport, EvalError> {
    if !(0.0..=1.0).contains(&prob_threshold) {
        return Err(EvalError::InvalidThreshold {
            name: "prob_threshold",
            value: prob_threshold,
        });
    }
    let n = registry.len();
    let mut counts = vec![ClassCounts::default(); n];
    let mut hits: Vec<Vec<RankedHit>> = vec![Vec::with_capacity(samples.len()); n];
    let mut positives = vec![0usize; n];

    for s in samples {
        if s.probabilities.len() != n {
            return Err(EvalError::LengthMismatch {
                image_id: s.image_id.clone(),
                expected: n,
                found: s.probabilities.len(),
            });
        }
        if let Some(&label) = s.labels.iter().find(|&&l| l >= n) {
            return Err(EvalError::ClassOutOfRange {
                image_id: s.image_id.clone(),
                class_id: label,
            });
        }
        for (c, &p) in s.probabilities.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(EvalError::ProbabilityOutOfRange {
                    image_id: s.image_id.clone(),
                    class_id: c,
                    value: p,
                });
            }
            let truth = s.labels.contains(&c);
            let predicted = p >= prob_threshold;
            match (truth, predicted) {
                (true, true) => counts[c].tp += 1,
                (false, true) => counts[c].fp += 1,
                (true, false) => counts[c].fn_ += 1,
                (false, false) => {}
            }
            positives[c] += usize::from(truth);
            hits[c].push(RankedHit {
                score: p,
                positive: truth,
            });
        }
    }

    let aps = hits
        .iter()
        .zip(&positives)
        .map(|(h, &pos)| ap_from_hits(h, pos))
        .collect();
    assemble(
        registry,
        &counts,
        aps,
        ReportSettings {
            task: Task::Classification,
            iou_threshold: None,
            confidence_threshold: prob_threshold,
            ap_method: AP_METHOD,
            map_over: "classes with at least one positive image",
            macro_over: "classes with positives or predicted positives",
        },
    )
}

/// Reads a probability table: header `image_id,<class names in registry order>`,
/// then one row per image.
pub fn read_probability_table<R: Read>(
    reader: R,
    registry: &ClassRegistry,
) -> Result<Vec<(String, Vec<f64>)>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| EvalError::Table(e.to_string()))?
        .clone();
    let expected: Vec<&str> = std::iter::once("image_id")
        .chain(registry.names().iter().map(String::as_str))
        .collect();
    if headers.iter().ne(expected.iter().copied()) {
        return Err(EvalError::Table(format!(
            "header must be `image_id` followed by the {} class names in order",
            registry.len()
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| EvalError::Table(e.to_string()))?;
        let row = i + 2;
        let image_id = record.get(0).unwrap_or_default().to_owned();
        let probs = record
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| EvalError::Table(format!("row {row}: {v:?} is not a number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((image_id, probs));
    }
    Ok(rows)
}

/// Joins probability rows with label sets taken from a dataset's boxes.
pub fn label_samples(
    dataset: &Dataset,
    rows: Vec<(String, Vec<f64>)>,
) -> Result<Vec<LabelSample>, EvalError> {
    let index = dataset.index();
    rows.into_iter()
        .map(|(image_id, probabilities)| {
            let &i = index
                .get(image_id.as_str())
                .ok_or_else(|| EvalError::UnknownImage(image_id.clone()))?;
            let labels = dataset.images()[i]
                .boxes
                .iter()
                .map(|b| b.class_id)
                .collect();
            Ok(LabelSample {
                image_id,
                probabilities,
                labels,
            })
        })
        .collect()
}
