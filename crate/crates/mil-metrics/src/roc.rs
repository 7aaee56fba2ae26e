use crate::error::{MetricsError, Result};
use serde::{Deserialize, Serialize};

/// ROC curve over the distinct observed scores plus a +inf sentinel.
///
/// Point `i` is the operating point of the rule "predict positive iff
/// score >= thresholds[i]"; thresholds are strictly decreasing, FPR/TPR run
/// non-decreasing from (0, 0) to (1, 1), and `auc` is the trapezoidal area,
/// which equals the Mann-Whitney pairwise statistic with half-weight ties.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

impl RocCurve {
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.thresholds
            .iter()
            .zip(&self.fpr)
            .zip(&self.tpr)
            .map(|((&t, &f), &p)| (t, f, p))
    }
}

pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite("scores"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClass {
            positives,
            negatives,
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut thresholds = vec![f64::INFINITY];
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        // Consume the whole tie group so tied scores move diagonally.
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(t);
        fpr.push(fp as f64 / negatives as f64);
        tpr.push(tp as f64 / positives as f64);
    }

    let mut auc = 0.0;
    for j in 1..fpr.len() {
        auc += (fpr[j] - fpr[j - 1]) * (tpr[j] + tpr[j - 1]) / 2.0;
    }

    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        auc,
    })
}
