use crate::error::{MetricsError, Result};

/// Pixel-level f1 between a binarized saliency mask and a ground-truth mask:
/// `2 |mask & truth| / (|mask| + |truth|)`. Defined as 1 when both are empty
/// and 0 when exactly one is.
pub fn pixel_f1(mask: &[bool], truth: &[bool]) -> Result<f64> {
    if mask.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            scores: mask.len(),
            labels: truth.len(),
        });
    }
    let m: usize = mask.iter().filter(|&&v| v).count();
    let t: usize = truth.iter().filter(|&&v| v).count();
    if m + t == 0 {
        return Ok(1.0);
    }
    let inter = mask
        .iter()
        .zip(truth)
        .filter(|&(&a, &b)| a && b)
        .count();
    Ok(2.0 * inter as f64 / (m + t) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_masks_score_one() {
        let m = [true, false, true, true];
        assert_eq!(pixel_f1(&m, &m).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_masks_score_zero() {
        let a = [true, false, true, false];
        let b = [false, true, false, true];
        assert_eq!(pixel_f1(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn half_coverage_is_two_thirds() {
        let truth = [true, true, false, false];
        let mask = [true, false, false, false];
        assert!((pixel_f1(&mask, &truth).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_conventions() {
        assert_eq!(pixel_f1(&[false; 4], &[false; 4]).unwrap(), 1.0);
        assert_eq!(pixel_f1(&[true, false], &[false, false]).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(pixel_f1(&[true], &[true, false]).is_err());
    }

    proptest! {
        #[test]
        fn symmetric(a in proptest::collection::vec(any::<bool>(), 32),
                     b in proptest::collection::vec(any::<bool>(), 32)) {
            prop_assert_eq!(pixel_f1(&a, &b).unwrap(), pixel_f1(&b, &a).unwrap());
        }
    }
}
