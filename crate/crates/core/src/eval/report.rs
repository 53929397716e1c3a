use std::fmt::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::ap::{ap_from_hits, collect_hits, mean_average_precision};
use super::confusion::{image_confusion, ConfusionMatrix};
use super::matching::{match_detections, ClassCounts, MatchOutcome};
use super::prf::{precision_recall_f1, Prf};
use super::sweep::{confidence_sweep, SweepCurves};
use super::{EvalError, EvalImage};
use crate::dataset::{ClassRegistry, Dataset};
use crate::detect::DetectionSet;
use crate::format::csv_field;

/// AP convention recorded in every report.
pub const AP_METHOD: &str = "all-points interpolation under the monotone precision envelope";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Detection,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class_id: usize,
    pub name: String,
    pub ground_truths: usize,
    #[serde(flatten)]
    pub counts: ClassCounts,
    #[serde(flatten)]
    pub metrics: Prf,
    /// `None` when the class has no ground truth.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub map: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSettings {
    pub task: Task,
    /// Detection only.
    pub iou_threshold: Option<f64>,
    /// Confidence (or probability) cut for P, R, F1 and the confusion matrix.
    pub confidence_threshold: f64,
    pub ap_method: &'static str,
    pub map_over: &'static str,
    pub macro_over: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub settings: ReportSettings,
    pub classes: Vec<ClassMetrics>,
    pub summary: Summary,
    /// Classes left out of the mAP for lack of ground truth.
    pub excluded_from_map: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curves: Option<SweepCurves>,
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

impl MetricsReport {
    /// Per-class `class,precision,recall,f1,ap` table in percent, closed by
    /// an `all` row carrying the macro averages and the mAP.
    pub fn to_table(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,ap\n");
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                csv_field(&c.name),
                pct(c.metrics.precision),
                pct(c.metrics.recall),
                pct(c.metrics.f1),
                c.ap.map_or_else(|| "-".to_owned(), pct)
            );
        }
        let s = &self.summary;
        let _ = writeln!(
            out,
            "all,{},{},{},{}",
            pct(s.macro_precision),
            pct(s.macro_recall),
            pct(s.macro_f1),
            pct(s.map)
        );
        out
    }

    pub fn class(&self, class_id: usize) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    pub confidence_threshold: f64,
    pub with_curves: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            confidence_threshold: 0.5,
            with_curves: false,
        }
    }
}

impl EvalOptions {
    fn validate(&self) -> Result<(), EvalError> {
        for (name, v) in [
            ("iou_threshold", self.iou_threshold),
            ("confidence_threshold", self.confidence_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EvalError::InvalidThreshold { name, value: v });
            }
        }
        Ok(())
    }
}

/// Lines detection sets up with dataset images. Images without a set get no
/// predictions; sets for unknown images are an error.
pub fn pair_detections<'a>(
    dataset: &'a Dataset,
    detections: &'a [DetectionSet],
) -> Result<Vec<EvalImage<'a>>, EvalError> {
    let index = dataset.index();
    let mut by_image: Vec<Option<&DetectionSet>> = vec![None; dataset.images().len()];
    for set in detections {
        let i = *index
            .get(set.image_id.as_str())
            .ok_or_else(|| EvalError::UnknownImage(set.image_id.clone()))?;
        if by_image[i].replace(set).is_some() {
            return Err(EvalError::DuplicateDetections(set.image_id.clone()));
        }
        if let Some(p) = set
            .predictions
            .iter()
            .find(|p| p.class_id >= dataset.num_classes())
        {
            return Err(EvalError::ClassOutOfRange {
                image_id: set.image_id.clone(),
                class_id: p.class_id,
            });
        }
    }
    Ok(dataset
        .images()
        .iter()
        .zip(by_image)
        .map(|(record, set)| EvalImage {
            gt: &record.boxes,
            preds: set.map_or(&[][..], |s| &s.predictions),
        })
        .collect())
}

pub(crate) fn assemble(
    registry: &ClassRegistry,
    counts: &[ClassCounts],
    aps: Vec<Option<f64>>,
    settings: ReportSettings,
) -> Result<MetricsReport, EvalError> {
    let map = mean_average_precision(&aps)?;
    let outcome = MatchOutcome {
        per_class: counts.to_vec(),
        pairs: Vec::new(),
        predictions: Vec::new(),
    };
    let prf = precision_recall_f1(&outcome);
    let classes: Vec<ClassMetrics> = counts
        .iter()
        .zip(&prf.per_class)
        .zip(&aps)
        .enumerate()
        .map(|(class_id, ((c, m), ap))| ClassMetrics {
            class_id,
            name: registry.name(class_id).unwrap_or_default().to_owned(),
            ground_truths: c.ground_truths(),
            counts: *c,
            metrics: *m,
            ap: *ap,
        })
        .collect();
    let excluded_from_map = aps
        .iter()
        .enumerate()
        .filter(|(_, a)| a.is_none())
        .map(|(i, _)| i)
        .collect();
    Ok(MetricsReport {
        settings,
        classes,
        summary: Summary {
            map,
            macro_precision: prf.macro_avg.precision,
            macro_recall: prf.macro_avg.recall,
            macro_f1: prf.macro_avg.f1,
        },
        excluded_from_map,
        confusion: None,
        curves: None,
    })
}

/// Full detection evaluation: per-class P/R/F1 at the confidence
/// threshold, AP over all confidences, mAP, confusion matrix and
/// (optionally) confidence-swept curves.
pub fn evaluate_detections(
    dataset: &Dataset,
    detections: &[DetectionSet],
    options: &EvalOptions,
) -> Result<MetricsReport, EvalError> {
    options.validate()?;
    let images = pair_detections(dataset, detections)?;
    evaluate_images(&images, dataset.registry(), options)
}

pub fn evaluate_images(
    images: &[EvalImage<'_>],
    registry: &ClassRegistry,
    options: &EvalOptions,
) -> Result<MetricsReport, EvalError> {
    options.validate()?;
    let n = registry.len();
    let (iou_t, conf_t) = (options.iou_threshold, options.confidence_threshold);

    let (outcome, confusion) = images
        .par_iter()
        .map(|img| {
            (
                match_detections(img.gt, img.preds, n, iou_t, conf_t),
                image_confusion(img, n, iou_t, conf_t),
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(
            (MatchOutcome::empty(n), ConfusionMatrix::new(n)),
            |(acc, mut cm), (o, c)| {
                cm.add(&c);
                (acc.merge(&o), cm)
            },
        );

    let (hits, gt_counts) = collect_hits(images, n, iou_t);
    let aps = hits
        .iter()
        .zip(&gt_counts)
        .map(|(h, &g)| ap_from_hits(h, g))
        .collect();

    let mut report = assemble(
        registry,
        &outcome.per_class,
        aps,
        ReportSettings {
            task: Task::Detection,
            iou_threshold: Some(iou_t),
            confidence_threshold: conf_t,
            ap_method: AP_METHOD,
            map_over: "classes with at least one ground-truth box",
            macro_over: "classes with ground truth or retained predictions",
        },
    )?;
    report.confusion = Some(confusion);
    if options.with_curves {
        report.curves = Some(confidence_sweep(images, n, iou_t));
    }
    Ok(report)
}
