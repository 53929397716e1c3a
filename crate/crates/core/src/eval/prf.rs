use serde::Serialize;

use super::matching::{ClassCounts, MatchOutcome};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl Prf {
    /// Precision, recall and their harmonic mean; every 0/0 is 0.
    pub fn from_counts(c: &ClassCounts) -> Self {
        let tp = c.tp as f64;
        Self::from_pr(ratio(tp, tp + c.fp as f64), ratio(tp, tp + c.fn_ as f64))
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        Self {
            precision,
            recall,
            f1: ratio(2.0 * precision * recall, precision + recall),
        }
    }

    /// Unweighted mean of each component.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a Prf>) -> Self {
        let (mut sum, mut n) = (Prf::default(), 0usize);
        for p in items {
            sum.precision += p.precision;
            sum.recall += p.recall;
            sum.f1 += p.f1;
            n += 1;
        }
        if n == 0 {
            return sum;
        }
        let n = n as f64;
        Self {
            precision: sum.precision / n,
            recall: sum.recall / n,
            f1: sum.f1 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrfSummary {
    pub per_class: Vec<Prf>,
    /// Mean over classes with at least one ground truth or retained prediction.
    pub macro_avg: Prf,
}

/// A class takes part in macro averages once it has ground truth or predictions.
pub(crate) fn is_active(c: &ClassCounts) -> bool {
    c.tp + c.fp + c.fn_ > 0
}

pub fn precision_recall_f1(outcome: &MatchOutcome) -> PrfSummary {
    let per_class: Vec<Prf> = outcome.per_class.iter().map(Prf::from_counts).collect();
    let macro_avg = Prf::mean(
        per_class
            .iter()
            .zip(&outcome.per_class)
            .filter(|(_, c)| is_active(c))
            .map(|(p, _)| p),
    );
    PrfSummary {
        per_class,
        macro_avg,
    }
}
