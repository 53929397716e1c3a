//! Slow reference implementations used to cross-check the metric code.
//!
//! Nothing here calls into the library: boxes are plain tuples, matching
//! is rerun from scratch at every threshold, and AP is integrated from the
//! resulting operating points.

/// `(class_id, cx, cy, w, h)`
pub type Gt = (usize, f64, f64, f64, f64);
/// `(class_id, confidence, cx, cy, w, h)`
pub type Pred = (usize, f64, f64, f64, f64, f64);

fn corners(cx: f64, cy: f64, w: f64, h: f64) -> [f64; 4] {
    // Boxes are clipped to the image before any geometry.
    let c = |v: f64| v.clamp(0.0, 1.0);
    [
        c(cx - w / 2.0),
        c(cy - h / 2.0),
        c(cx + w / 2.0),
        c(cy + h / 2.0),
    ]
}

pub fn iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let p = corners(a.0, a.1, a.2, a.3);
    let q = corners(b.0, b.1, b.2, b.3);
    let iw = (p[2].min(q[2]) - p[0].max(q[0])).max(0.0);
    let ih = (p[3].min(q[3]) - p[1].max(q[1])).max(0.0);
    let inter = iw * ih;
    let area = |r: [f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    let union = area(p) + area(q) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// True positives and retained predictions of `class` in one image.
///
/// Predictions at or above `conf_t` are visited by descending confidence,
/// ties in input order. Each takes the free ground truth of its class with
/// the largest IoU (lowest index on ties) if that IoU reaches `iou_t`.
pub fn match_class(
    gt: &[Gt],
    preds: &[Pred],
    class: usize,
    iou_t: f64,
    conf_t: f64,
) -> (usize, usize) {
    let mut order: Vec<usize> = (0..preds.len())
        .filter(|&i| preds[i].0 == class && preds[i].1 >= conf_t)
        .collect();
    // Insertion sort keeps equal confidences in input order.
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && preds[order[j - 1]].1 < preds[order[j]].1 {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut taken = vec![false; gt.len()];
    let mut tp = 0;
    for &pi in &order {
        let p = preds[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gt.iter().enumerate() {
            if g.0 != class || taken[gi] {
                continue;
            }
            let v = iou((p.2, p.3, p.4, p.5), (g.1, g.2, g.3, g.4));
            if v >= iou_t && best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, _)) = best {
            taken[gi] = true;
            tp += 1;
        }
    }
    (tp, order.len())
}

/// AP of `class` by sweeping every distinct confidence as a threshold and
/// integrating the running-maximum precision envelope over recall.
pub fn average_precision(images: &[(Vec<Gt>, Vec<Pred>)], class: usize, iou_t: f64) -> Option<f64> {
    let positives: usize = images
        .iter()
        .map(|(g, _)| g.iter().filter(|b| b.0 == class).count())
        .sum();
    if positives == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = images
        .iter()
        .flat_map(|(_, p)| p.iter().filter(|q| q.0 == class).map(|q| q.1))
        .collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();

    let mut points = Vec::new();
    for &t in &thresholds {
        let (mut tp, mut kept) = (0, 0);
        for (g, p) in images {
            let (a, b) = match_class(g, p, class, iou_t, t);
            tp += a;
            kept += b;
        }
        points.push((tp as f64 / positives as f64, tp as f64 / kept as f64));
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..points.len() {
        let envelope = points[i..].iter().map(|p| p.1).fold(0.0, f64::max);
        ap += (points[i].0 - prev_recall) * envelope;
        prev_recall = points[i].0;
    }
    Some(ap)
}
