use crate::error::{MetricsError, Result};
use crate::normal::normal_sf;
use serde::{Deserialize, Serialize};

/// One-sided DeLong comparison of two classifiers scored on the same samples.
///
/// Orientation: the alternative hypothesis is AUC_b > AUC_a, so small p means
/// classifier `b` is significantly better; `p = 1 - Phi(z)` with
/// `z = (AUC_b - AUC_a) / sqrt(var)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DelongComparison {
    pub auc_a: f64,
    pub auc_b: f64,
    pub z: f64,
    pub p: f64,
    /// Set when the placement covariance degenerates to zero with unequal
    /// AUCs, in which case p collapses to 0 or 1.
    pub degenerate: bool,
}

/// Placement values: for each positive the fraction of negatives it beats
/// (ties half), and symmetrically for negatives.
fn placements(scores: &[f64], labels: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter_map(|(&s, &l)| l.then_some(s))
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter_map(|(&s, &l)| (!l).then_some(s))
        .collect();
    let mut v10 = vec![0.0; pos.len()];
    let mut v01 = vec![0.0; neg.len()];
    for (i, &sp) in pos.iter().enumerate() {
        for (j, &sn) in neg.iter().enumerate() {
            let psi = if sp > sn {
                1.0
            } else if sp == sn {
                0.5
            } else {
                0.0
            };
            v10[i] += psi;
            v01[j] += psi;
        }
    }
    for v in &mut v10 {
        *v /= neg.len() as f64;
    }
    for v in &mut v01 {
        *v /= pos.len() as f64;
    }
    (v10, v01)
}

fn sample_cov(a: &[f64], mean_a: f64, b: &[f64], mean_b: f64) -> f64 {
    if a.len() < 2 {
        return 0.0;
    }
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x - mean_a) * (y - mean_b))
        .sum();
    s / (a.len() - 1) as f64
}

pub fn delong_one_sided(
    scores_a: &[f64],
    scores_b: &[f64],
    labels: &[bool],
) -> Result<DelongComparison> {
    if scores_a.len() != labels.len() || scores_b.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores_a.len().min(scores_b.len()),
            labels: labels.len(),
        });
    }
    if scores_a.iter().chain(scores_b).any(|s| !s.is_finite()) {
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

    let (v10_a, v01_a) = placements(scores_a, labels);
    let (v10_b, v01_b) = placements(scores_b, labels);
    let auc_a = v10_a.iter().sum::<f64>() / positives as f64;
    let auc_b = v10_b.iter().sum::<f64>() / positives as f64;

    let s10_aa = sample_cov(&v10_a, auc_a, &v10_a, auc_a);
    let s10_bb = sample_cov(&v10_b, auc_b, &v10_b, auc_b);
    let s10_ab = sample_cov(&v10_a, auc_a, &v10_b, auc_b);
    let s01_aa = sample_cov(&v01_a, auc_a, &v01_a, auc_a);
    let s01_bb = sample_cov(&v01_b, auc_b, &v01_b, auc_b);
    let s01_ab = sample_cov(&v01_a, auc_a, &v01_b, auc_b);

    let var = (s10_aa + s10_bb - 2.0 * s10_ab) / positives as f64
        + (s01_aa + s01_bb - 2.0 * s01_ab) / negatives as f64;
    let diff = auc_b - auc_a;

    let (z, p, degenerate) = if var > 0.0 {
        let z = diff / var.sqrt();
        (z, normal_sf(z), false)
    } else if diff == 0.0 {
        (0.0, 0.5, false)
    } else if diff > 0.0 {
        (f64::INFINITY, 0.0, true)
    } else {
        (f64::NEG_INFINITY, 1.0, true)
    };

    Ok(DelongComparison {
        auc_a,
        auc_b,
        z,
        p,
        degenerate,
    })
}
