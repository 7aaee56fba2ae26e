use crate::roc::RocCurve;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdCriterion {
    /// Maximize Youden's J = TPR - FPR.
    Youden,
    /// Minimize the distance to the (0, 1) point:
    /// d = sqrt(FPR^2 + (1 - TPR)^2).
    Distance,
}

impl std::fmt::Display for ThresholdCriterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdCriterion::Youden => write!(f, "youden"),
            ThresholdCriterion::Distance => write!(f, "distance"),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub criterion: ThresholdCriterion,
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    /// Value of the criterion at the optimum (J for youden, d for distance).
    pub objective: f64,
}

/// Pick the operating threshold attaining the criterion optimum over every
/// curve point. Ties break toward the larger threshold (fewer positives),
/// which the descending scan gets for free by strict improvement.
pub fn choose_threshold(curve: &RocCurve, criterion: ThresholdCriterion) -> ThresholdChoice {
    let mut best: Option<ThresholdChoice> = None;
    for (t, fpr, tpr) in curve.points() {
        let objective = match criterion {
            ThresholdCriterion::Youden => tpr - fpr,
            ThresholdCriterion::Distance => (fpr * fpr + (1.0 - tpr) * (1.0 - tpr)).sqrt(),
        };
        let better = match &best {
            None => true,
            Some(b) => match criterion {
                ThresholdCriterion::Youden => objective > b.objective,
                ThresholdCriterion::Distance => objective < b.objective,
            },
        };
        if better {
            best = Some(ThresholdChoice {
                criterion,
                threshold: t,
                tpr,
                fpr,
                objective,
            });
        }
    }
    best.expect("ROC curve always has at least the sentinel point")
}
