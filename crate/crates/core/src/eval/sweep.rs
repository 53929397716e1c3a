use std::fmt::Write;

use serde::Serialize;

use super::ap::{collect_hits, pr_points, precision_envelope, RankedHit};
use super::matching::ClassCounts;
use super::prf::{is_active, Prf};
use super::EvalImage;
use crate::dataset::ClassRegistry;
use crate::format::csv_field;

/// Points of the recall grid used for precision-recall curves.
pub const PR_GRID_POINTS: usize = 101;

/// A metric sampled along a strictly increasing abscissa, per class and averaged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub abscissa: Vec<f64>,
    /// `None` for classes with neither ground truth nor predictions.
    pub per_class: Vec<Option<Vec<f64>>>,
    pub mean: Vec<f64>,
}

impl Curve {
    /// Wide table: `<x_label>,<class...>,mean`, one row per abscissa value.
    pub fn to_table(&self, x_label: &str, registry: &ClassRegistry) -> String {
        let mut out = String::from(x_label);
        for (id, c) in self.per_class.iter().enumerate() {
            if c.is_some() {
                out.push(',');
                out.push_str(&csv_field(registry.name(id).unwrap_or("")));
            }
        }
        out.push_str(",mean\n");
        for (i, x) in self.abscissa.iter().enumerate() {
            let _ = write!(out, "{x:.6}");
            for c in self.per_class.iter().flatten() {
                let _ = write!(out, ",{:.6}", c[i]);
            }
            let _ = writeln!(out, ",{:.6}", self.mean[i]);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestF1 {
    pub confidence: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCurves {
    pub precision: Curve,
    pub recall: Curve,
    pub f1: Curve,
    /// Envelope precision on a uniform recall grid.
    pub pr: Curve,
    /// Lowest confidence at which the mean F1 curve peaks.
    pub best_f1: BestF1,
}

/// Per-class counts at every threshold, admitting predictions with score >= t.
fn counts_at(
    sorted_desc: &[RankedHit],
    positive_prefix: &[usize],
    gts: usize,
    t: f64,
) -> ClassCounts {
    let kept = sorted_desc.partition_point(|h| h.score >= t);
    let tp = positive_prefix[kept];
    ClassCounts {
        tp,
        fp: kept - tp,
        fn_: gts - tp,
    }
}

/// P, R and F1 against confidence, plus the precision-recall curve.
///
/// Confidences are evaluated at every distinct prediction score plus 0 and 1.
pub fn confidence_sweep(
    images: &[EvalImage<'_>],
    num_classes: usize,
    iou_threshold: f64,
) -> SweepCurves {
    let (mut hits, gt_counts) = collect_hits(images, num_classes, iou_threshold);

    let mut thresholds: Vec<f64> = hits.iter().flatten().map(|h| h.score).collect();
    thresholds.extend([0.0, 1.0]);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let nt = thresholds.len();
    let mut p_curves = vec![None; num_classes];
    let mut r_curves = vec![None; num_classes];
    let mut f_curves = vec![None; num_classes];
    let mut sums = vec![Prf::default(); nt];
    let mut active = vec![0usize; nt];

    for c in 0..num_classes {
        if hits[c].is_empty() && gt_counts[c] == 0 {
            continue;
        }
        let h = &mut hits[c];
        h.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut prefix = vec![0usize; h.len() + 1];
        for (i, x) in h.iter().enumerate() {
            prefix[i + 1] = prefix[i] + usize::from(x.positive);
        }
        let (mut pc, mut rc, mut fc) = (vec![0.0; nt], vec![0.0; nt], vec![0.0; nt]);
        for (i, &t) in thresholds.iter().enumerate() {
            let counts = counts_at(h, &prefix, gt_counts[c], t);
            let m = Prf::from_counts(&counts);
            (pc[i], rc[i], fc[i]) = (m.precision, m.recall, m.f1);
            if is_active(&counts) {
                active[i] += 1;
                sums[i].precision += m.precision;
                sums[i].recall += m.recall;
                sums[i].f1 += m.f1;
            }
        }
        p_curves[c] = Some(pc);
        r_curves[c] = Some(rc);
        f_curves[c] = Some(fc);
    }

    let mean_of = |get: fn(&Prf) -> f64| -> Vec<f64> {
        sums.iter()
            .zip(&active)
            .map(|(s, &n)| if n == 0 { 0.0 } else { get(s) / n as f64 })
            .collect()
    };
    let f1_mean = mean_of(|p| p.f1);
    let mut best_f1 = BestF1 {
        confidence: thresholds[0],
        f1: f1_mean[0],
    };
    for (&t, &f) in thresholds.iter().zip(&f1_mean) {
        if f > best_f1.f1 {
            best_f1 = BestF1 {
                confidence: t,
                f1: f,
            };
        }
    }

    let pr = pr_curve(&hits, &gt_counts);
    SweepCurves {
        precision: Curve {
            abscissa: thresholds.clone(),
            per_class: p_curves,
            mean: mean_of(|p| p.precision),
        },
        recall: Curve {
            abscissa: thresholds.clone(),
            per_class: r_curves,
            mean: mean_of(|p| p.recall),
        },
        f1: Curve {
            abscissa: thresholds,
            per_class: f_curves,
            mean: f1_mean,
        },
        pr,
        best_f1,
    }
}

fn pr_curve(hits: &[Vec<RankedHit>], gt_counts: &[usize]) -> Curve {
    let grid: Vec<f64> = (0..PR_GRID_POINTS)
        .map(|i| i as f64 / (PR_GRID_POINTS - 1) as f64)
        .collect();
    let mut per_class = vec![None; hits.len()];
    let mut mean = vec![0.0; grid.len()];
    let mut n = 0usize;
    for (c, h) in hits.iter().enumerate() {
        if gt_counts[c] == 0 {
            continue;
        }
        let points = pr_points(h, gt_counts[c]);
        let env = precision_envelope(&points);
        let values: Vec<f64> = grid
            .iter()
            .map(|&r| {
                let i = points.partition_point(|p| p.recall < r);
                env.get(i).copied().unwrap_or(0.0)
            })
            .collect();
        for (m, v) in mean.iter_mut().zip(&values) {
            *m += v;
        }
        n += 1;
        per_class[c] = Some(values);
    }
    if n > 0 {
        mean.iter_mut().for_each(|m| *m /= n as f64);
    }
    Curve {
        abscissa: grid,
        per_class,
        mean,
    }
}
