use rayon::prelude::*;
use serde::Serialize;

use super::matching::{match_detections, PredictionOutcome};
use super::{EvalError, EvalImage};

/// A scored decision: a detection (or a class probability) and whether it was correct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankedHit {
    pub score: f64,
    pub positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    /// Lowest score admitted at this operating point.
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Operating points from admitting hits in descending score order.
///
/// Hits with equal scores are admitted together, so exactly one point is
/// produced per distinct score.
pub fn pr_points(hits: &[RankedHit], num_positives: usize) -> Vec<PrPoint> {
    let mut sorted = hits.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, h) in sorted.iter().enumerate() {
        if h.positive {
            tp += 1;
        } else {
            fp += 1;
        }
        let group_ends = sorted.get(i + 1).is_none_or(|next| next.score != h.score);
        if group_ends {
            points.push(PrPoint {
                threshold: h.score,
                recall: if num_positives == 0 {
                    0.0
                } else {
                    tp as f64 / num_positives as f64
                },
                precision: tp as f64 / (tp + fp) as f64,
            });
        }
    }
    points
}

/// Running maximum of precision from the right: at each point, the best
/// precision reachable at that recall or beyond. Non-increasing.
pub fn precision_envelope(points: &[PrPoint]) -> Vec<f64> {
    let mut env = vec![0.0; points.len()];
    let mut best: f64 = 0.0;
    for (i, p) in points.iter().enumerate().rev() {
        best = best.max(p.precision);
        env[i] = best;
    }
    env
}

/// All-points average precision: area under the precision envelope over recall.
/// `None` when there are no positives.
pub fn ap_from_hits(hits: &[RankedHit], num_positives: usize) -> Option<f64> {
    if num_positives == 0 {
        return None;
    }
    let points = pr_points(hits, num_positives);
    let env = precision_envelope(&points);
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (p, e) in points.iter().zip(&env) {
        area += (p.recall - prev_recall) * e;
        prev_recall = p.recall;
    }
    Some(area)
}

/// Per-class hits and ground-truth counts, matching every image with no
/// confidence cut.
pub(crate) fn collect_hits(
    images: &[EvalImage<'_>],
    num_classes: usize,
    iou_threshold: f64,
) -> (Vec<Vec<RankedHit>>, Vec<usize>) {
    let per_image: Vec<Vec<(usize, RankedHit)>> = images
        .par_iter()
        .map(|img| {
            let outcome = match_detections(img.gt, img.preds, num_classes, iou_threshold, 0.0);
            img.preds
                .iter()
                .zip(&outcome.predictions)
                .map(|(p, o)| {
                    let positive = matches!(o, PredictionOutcome::TruePositive { .. });
                    (
                        p.class_id,
                        RankedHit {
                            score: p.confidence,
                            positive,
                        },
                    )
                })
                .collect()
        })
        .collect();

    let mut hits = vec![Vec::new(); num_classes];
    let mut gt_counts = vec![0usize; num_classes];
    for (img, image_hits) in images.iter().zip(per_image) {
        for (class_id, h) in image_hits {
            hits[class_id].push(h);
        }
        for g in img.gt {
            gt_counts[g.class_id] += 1;
        }
    }
    (hits, gt_counts)
}

/// Average precision of one class over all images, pooled by confidence.
pub fn average_precision(
    images: &[EvalImage<'_>],
    num_classes: usize,
    class_id: usize,
    iou_threshold: f64,
) -> Option<f64> {
    let (hits, gt_counts) = collect_hits(images, num_classes, iou_threshold);
    ap_from_hits(&hits[class_id], gt_counts[class_id])
}

/// Mean of the defined per-class APs.
pub fn mean_average_precision(aps: &[Option<f64>]) -> Result<f64, EvalError> {
    let defined: Vec<f64> = aps.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(EvalError::NoEvaluableClasses);
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}
