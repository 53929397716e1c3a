use std::fmt::Write;

use serde::Serialize;

use super::iou::iou;
use super::matching::confidence_order;
use super::EvalImage;
use crate::dataset::ClassRegistry;
use crate::format::csv_field;

/// `(N + 1) x (N + 1)` counts. Rows are true classes, columns predicted
/// classes; index `N` is background on both axes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    cells: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        let side = num_classes + 1;
        Self {
            num_classes,
            cells: vec![0; side * side],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn background(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.cells[truth * (self.num_classes + 1) + predicted]
    }

    fn bump(&mut self, truth: usize, predicted: usize) {
        self.cells[truth * (self.num_classes + 1) + predicted] += 1;
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        let side = self.num_classes + 1;
        &self.cells[truth * side..(truth + 1) * side]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.num_classes, other.num_classes, "matrix sizes differ");
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a += b;
        }
    }

    /// Delimited table with a `true\predicted` header row and a `background` row/column.
    pub fn to_table(&self, registry: &ClassRegistry) -> String {
        let label = |i: usize| {
            if i == self.num_classes {
                "background".to_owned()
            } else {
                csv_field(registry.name(i).unwrap_or(""))
            }
        };
        let side = self.num_classes + 1;
        let mut out = String::from("true\\predicted");
        for j in 0..side {
            let _ = write!(out, ",{}", label(j));
        }
        out.push('\n');
        for i in 0..side {
            out.push_str(&label(i));
            for v in self.row(i) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Confusion counts for one image.
///
/// Retained predictions are paired with ground truth regardless of class:
/// all pairs with IoU at or above the threshold are taken greedily by
/// descending IoU (then confidence rank, then ground-truth index), each box
/// used at most once. Unpaired ground truth lands in the background column,
/// unpaired predictions in the background row.
pub fn image_confusion(
    image: &EvalImage<'_>,
    num_classes: usize,
    iou_threshold: f64,
    confidence_threshold: f64,
) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::new(num_classes);
    let kept: Vec<usize> = confidence_order(image.preds)
        .into_iter()
        .filter(|&i| image.preds[i].confidence >= confidence_threshold)
        .collect();

    let mut candidates = Vec::new();
    for (rank, &pi) in kept.iter().enumerate() {
        for (gi, g) in image.gt.iter().enumerate() {
            let v = iou(&image.preds[pi].bbox, &g.bbox);
            if v >= iou_threshold {
                candidates.push((v, rank, gi));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut pred_used = vec![false; kept.len()];
    let mut gt_used = vec![false; image.gt.len()];
    for (_, rank, gi) in candidates {
        if pred_used[rank] || gt_used[gi] {
            continue;
        }
        pred_used[rank] = true;
        gt_used[gi] = true;
        m.bump(image.gt[gi].class_id, image.preds[kept[rank]].class_id);
    }
    let bg = m.background();
    for (g, _) in image.gt.iter().zip(&gt_used).filter(|(_, &u)| !u) {
        m.bump(g.class_id, bg);
    }
    for (&pi, _) in kept.iter().zip(&pred_used).filter(|(_, &u)| !u) {
        m.bump(bg, image.preds[pi].class_id);
    }
    m
}

pub fn confusion_matrix(
    images: &[EvalImage<'_>],
    num_classes: usize,
    iou_threshold: f64,
    confidence_threshold: f64,
) -> ConfusionMatrix {
    let mut total = ConfusionMatrix::new(num_classes);
    for img in images {
        total.add(&image_confusion(
            img,
            num_classes,
            iou_threshold,
            confidence_threshold,
        ));
    }
    total
}
