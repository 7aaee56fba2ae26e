use crate::error::{CoreError, Result};
use crate::real::{real, Real};

/// Euclidean projection of `logits` onto the probability simplex.
///
/// Sort-based evaluation of the closed-form projection: with the logits
/// sorted descending, the support size is the largest `k` such that
/// `1 + k * z_(k) > sum_{j<=k} z_(j)`, the offset is
/// `tau = (sum over support - 1) / k`, and the output is `max(z - tau, 0)`.
/// Unlike softmax this attains exact zeros for sufficiently small logits.
pub fn sparsemax<E: Real>(logits: &[E]) -> Result<Vec<E>> {
    if logits.is_empty() {
        return Err(CoreError::InvalidArgument(
            "sparsemax requires at least one logit".into(),
        ));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("sparsemax input"));
    }
    // A single logit projects to exactly [1]; computing it as z - tau would
    // round for most z.
    if logits.len() == 1 {
        return Ok(vec![E::one()]);
    }
    let tau = support_offset(logits);
    Ok(logits.iter().map(|&z| (z - tau).max(E::zero())).collect())
}

/// Jacobian-vector product of the simplex projection.
///
/// On the support set the projection is locally an affine map, so the
/// upstream gradient is mean-subtracted over support coordinates and zeroed
/// everywhere else.
pub fn sparsemax_backward<E: Real>(logits: &[E], upstream: &[E]) -> Result<Vec<E>> {
    if logits.len() != upstream.len() {
        return Err(CoreError::ShapeMismatch {
            context: "sparsemax backward",
            expected: vec![logits.len()],
            got: vec![upstream.len()],
        });
    }
    if upstream.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("sparsemax upstream gradient"));
    }
    let probs = sparsemax(logits)?;
    let mut count = 0usize;
    let mut sum = E::zero();
    for (&p, &g) in probs.iter().zip(upstream) {
        if p > E::zero() {
            count += 1;
            sum = sum + g;
        }
    }
    let mean = sum / real::<E>(count as f64);
    Ok(probs
        .iter()
        .zip(upstream)
        .map(|(&p, &g)| if p > E::zero() { g - mean } else { E::zero() })
        .collect())
}

fn support_offset<E: Real>(logits: &[E]) -> E {
    let mut sorted = logits.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite logits"));
    let one = E::one();
    let mut cumsum = E::zero();
    let mut support = 1usize;
    let mut support_sum = sorted[0];
    for (i, &z) in sorted.iter().enumerate() {
        cumsum = cumsum + z;
        if one + real::<E>((i + 1) as f64) * z > cumsum {
            support = i + 1;
            support_sum = cumsum;
        }
    }
    (support_sum - one) / real::<E>(support as f64)
}
