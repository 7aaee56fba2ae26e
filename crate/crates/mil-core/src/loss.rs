use crate::error::{CoreError, Result};
use crate::real::{real, Real};

/// Probabilities are clamped into [PROB_EPS, 1 - PROB_EPS] before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Focal loss for binary targets: `-alpha * (1 - p_t)^gamma * ln(p_t)` with
/// `p_t = p` for positive targets and `1 - p` otherwise. With `gamma = 0`,
/// `alpha = 1` it reduces to binary cross-entropy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FocalLoss {
    pub alpha: f64,
    pub gamma: f64,
}

impl FocalLoss {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(CoreError::InvalidArgument(format!(
                "focal alpha must lie in (0, 1], got {alpha}"
            )));
        }
        if gamma < 0.0 {
            return Err(CoreError::InvalidArgument(format!(
                "focal gamma must be nonnegative, got {gamma}"
            )));
        }
        Ok(Self { alpha, gamma })
    }

    /// Binary cross-entropy shape.
    pub fn bce() -> Self {
        Self {
            alpha: 1.0,
            gamma: 0.0,
        }
    }

    pub fn value<E: Real>(&self, p: E, target: bool) -> E {
        let pt = self.clamped_pt(p, target);
        let alpha = real::<E>(self.alpha);
        if self.gamma == 0.0 {
            return -alpha * pt.ln();
        }
        let gamma = real::<E>(self.gamma);
        -alpha * (E::one() - pt).powf(gamma) * pt.ln()
    }

    /// dL/dp for the (clamped) probability.
    pub fn grad<E: Real>(&self, p: E, target: bool) -> E {
        let pt = self.clamped_pt(p, target);
        let alpha = real::<E>(self.alpha);
        let one = E::one();
        let d_pt = if self.gamma == 0.0 {
            -alpha / pt
        } else {
            let gamma = real::<E>(self.gamma);
            alpha * gamma * (one - pt).powf(gamma - one) * pt.ln()
                - alpha * (one - pt).powf(gamma) / pt
        };
        if target {
            d_pt
        } else {
            -d_pt
        }
    }

    fn clamped_pt<E: Real>(&self, p: E, target: bool) -> E {
        let lo = real::<E>(PROB_EPS);
        let hi = real::<E>(1.0 - PROB_EPS);
        if p < lo || p > hi {
            log::debug!("focal loss clamped out-of-range probability {p}");
        }
        let p = p.max(lo).min(hi);
        if target {
            p
        } else {
            E::one() - p
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduces_to_bce_at_half() {
        let l = FocalLoss::new(1.0, 0.0).unwrap();
        let v: f64 = l.value(0.5, true);
        assert!((v - 0.693_147_180_559_945_3).abs() < 1e-12);
    }

    #[test]
    fn focusing_exponent_downweights() {
        // 0.25 * ln 2 evaluated directly.
        let l = FocalLoss::new(1.0, 2.0).unwrap();
        let v: f64 = l.value(0.5, true);
        assert!((v - 0.25 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((v - 0.173_286_795_139_986_33).abs() < 1e-9);
    }

    #[test]
    fn confident_correct_prediction_is_nearly_free() {
        let l = FocalLoss::new(0.25, 2.0).unwrap();
        let v: f64 = l.value(1.0 - 1e-7, true);
        assert!(v >= 0.0 && v < 1e-13, "loss was {v}");
    }

    #[test]
    fn clamps_out_of_range_probabilities() {
        let l = FocalLoss::bce();
        let v: f64 = l.value(0.0, true);
        assert!(v.is_finite());
        assert!((v - (1e-7f64).ln().abs()).abs() < 1e-9);
        let g: f64 = l.grad(1.0, false);
        assert!(g.is_finite());
    }

    #[test]
    fn matches_bce_on_grid() {
        let l = FocalLoss::bce();
        for i in 0..500 {
            let p = (i as f64 + 0.5) / 500.0;
            for target in [true, false] {
                let bce = if target { -p.ln() } else { -(1.0 - p).ln() };
                let v: f64 = l.value(p, target);
                assert!((v - bce).abs() <= 1e-9, "p={p} target={target}");
            }
        }
    }

    #[test]
    fn grad_matches_finite_differences() {
        let eps = 1e-7;
        for (alpha, gamma) in [(1.0, 0.0), (0.25, 2.0), (0.5, 1.0), (1.0, 3.5)] {
            let l = FocalLoss::new(alpha, gamma).unwrap();
            for i in 1..40 {
                let p = i as f64 / 40.0;
                for target in [true, false] {
                    let numeric =
                        (l.value(p + eps, target) - l.value(p - eps, target)) / (2.0 * eps);
                    let analytic: f64 = l.grad(p, target);
                    let rel = (numeric - analytic).abs() / analytic.abs().max(1.0);
                    assert!(rel < 1e-5, "p={p} a={alpha} g={gamma}: {numeric} vs {analytic}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_constants() {
        assert!(FocalLoss::new(0.0, 2.0).is_err());
        assert!(FocalLoss::new(1.5, 2.0).is_err());
        assert!(FocalLoss::new(0.25, -1.0).is_err());
    }
}
