use crate::error::{MetricsError, Result};
use crate::sequences::SequenceSet;
use serde::{Deserialize, Serialize};

/// Sequence-detection counts and scores for one examination or an aggregate.
///
/// A predicted sequence scores one true positive for a true sequence when the
/// index of its largest estimator value falls inside that true sequence; this
/// never double counts predicted sequences that overlap the same true one.
/// PP = TP + FP always.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DetectionReport {
    pub tp: usize,
    pub fp: usize,
    pub pp: usize,
    /// Number of true sequences (the recall denominator).
    pub n_true: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Both the truth and the prediction were empty; scored as perfect
    /// negative agreement and flagged so paper-aligned aggregates can drop it.
    pub both_empty: bool,
}

impl DetectionReport {
    fn from_counts(tp: usize, fp: usize, n_true: usize) -> Self {
        let pp = tp + fp;
        let both_empty = n_true == 0 && pp == 0;
        let precision = if pp > 0 {
            tp as f64 / pp as f64
        } else if n_true == 0 {
            1.0
        } else {
            0.0
        };
        let recall = if n_true > 0 {
            tp as f64 / n_true as f64
        } else if pp == 0 {
            1.0
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            tp,
            fp,
            pp,
            n_true,
            precision,
            recall,
            f1,
            both_empty,
        }
    }
}

/// Score predicted sequences `predicted` against true sequences `truth` using
/// the per-instance estimator values `estimator` (instance logits, attention
/// weights, or Shapley coefficients). Argmax ties break to the lowest index.
pub fn sequence_detection_report(
    truth: &SequenceSet,
    predicted: &SequenceSet,
    estimator: &[f64],
) -> Result<DetectionReport> {
    let r = estimator.len();
    for set in [truth, predicted] {
        if let Some(end) = set.max_end() {
            if end >= r {
                return Err(MetricsError::InvalidArgument(format!(
                    "sequence end {end} outside bag of length {r}"
                )));
            }
        }
    }
    if estimator.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite("estimator"));
    }

    // Peak index of each predicted sequence; strict > keeps the lowest index
    // on ties.
    let peaks: Vec<usize> = predicted
        .ranges()
        .iter()
        .map(|&(s, e)| {
            let mut best = s;
            for k in s..=e {
                if estimator[k] > estimator[best] {
                    best = k;
                }
            }
            best
        })
        .collect();

    let tp = truth
        .ranges()
        .iter()
        .filter(|&&(s, e)| peaks.iter().any(|&k| s <= k && k <= e))
        .count();
    let fp = peaks.iter().filter(|&&k| !truth.contains(k)).count();

    Ok(DetectionReport::from_counts(tp, fp, truth.len()))
}

/// Micro-aggregate per-bag reports: counts are summed, scores recomputed.
pub fn aggregate_reports<'a>(
    reports: impl IntoIterator<Item = &'a DetectionReport>,
) -> DetectionReport {
    let (mut tp, mut fp, mut n_true) = (0, 0, 0);
    for r in reports {
        tp += r.tp;
        fp += r.fp;
        n_true += r.n_true;
    }
    DetectionReport::from_counts(tp, fp, n_true)
}
