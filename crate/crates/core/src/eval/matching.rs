use serde::Serialize;

use super::iou::iou;
use crate::dataset::GroundTruthBox;
use crate::detect::PredictedBox;

/// True/false positive and false negative counts for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ClassCounts {
    pub fn ground_truths(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn predictions(&self) -> usize {
        self.tp + self.fp
    }

    fn add(&mut self, other: &ClassCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// What happened to one prediction during matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionOutcome {
    /// Below the confidence threshold.
    Discarded,
    TruePositive {
        gt: usize,
        iou: f64,
    },
    FalsePositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub prediction: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchOutcome {
    /// Indexed by class id.
    pub per_class: Vec<ClassCounts>,
    pub pairs: Vec<MatchedPair>,
    /// Indexed like the input predictions. Empty after [`MatchOutcome::merge`].
    pub predictions: Vec<PredictionOutcome>,
}

impl MatchOutcome {
    pub fn empty(num_classes: usize) -> Self {
        Self {
            per_class: vec![ClassCounts::default(); num_classes],
            pairs: Vec::new(),
            predictions: Vec::new(),
        }
    }

    /// Sums class counts across images. Pair and prediction indices are
    /// image-local, so they are dropped.
    pub fn merge(mut self, other: &MatchOutcome) -> Self {
        for (a, b) in self.per_class.iter_mut().zip(&other.per_class) {
            a.add(b);
        }
        self.pairs.clear();
        self.predictions.clear();
        self
    }

    pub fn total(&self) -> ClassCounts {
        let mut t = ClassCounts::default();
        for c in &self.per_class {
            t.add(c);
        }
        t
    }
}

/// Prediction indices sorted by descending confidence; ties keep input order.
pub(crate) fn confidence_order(preds: &[PredictedBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));
    order
}

/// Greedy per-class matching of one image's predictions to its ground truth.
///
/// Predictions below `confidence_threshold` are discarded. The rest are
/// visited by descending confidence; each claims the unmatched ground truth
/// of its own class with the highest IoU at or above `iou_threshold`
/// (lowest index on ties), or counts as a false positive. Unclaimed ground
/// truths are false negatives. Class ids must be below `num_classes`.
pub fn match_detections(
    gt: &[GroundTruthBox],
    preds: &[PredictedBox],
    num_classes: usize,
    iou_threshold: f64,
    confidence_threshold: f64,
) -> MatchOutcome {
    let mut out = MatchOutcome::empty(num_classes);
    out.predictions = vec![PredictionOutcome::Discarded; preds.len()];
    let mut claimed = vec![false; gt.len()];

    for pi in confidence_order(preds) {
        let p = &preds[pi];
        if p.confidence < confidence_threshold {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gt.iter().enumerate() {
            if claimed[gi] || g.class_id != p.class_id {
                continue;
            }
            let v = iou(&p.bbox, &g.bbox);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        match best {
            Some((gi, v)) => {
                claimed[gi] = true;
                out.per_class[p.class_id].tp += 1;
                out.pairs.push(MatchedPair {
                    prediction: pi,
                    ground_truth: gi,
                    iou: v,
                });
                out.predictions[pi] = PredictionOutcome::TruePositive { gt: gi, iou: v };
            }
            None => {
                out.per_class[p.class_id].fp += 1;
                out.predictions[pi] = PredictionOutcome::FalsePositive;
            }
        }
    }
    for (g, _) in gt.iter().zip(&claimed).filter(|(_, &c)| !c) {
        out.per_class[g.class_id].fn_ += 1;
    }
    out
}
