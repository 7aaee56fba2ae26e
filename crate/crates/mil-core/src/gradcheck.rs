use crate::real::Real;
use crate::tensor::Tensor;
use rand::Rng;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// max over checked coordinates of |analytic - numeric| / max(1, |analytic|).
    pub max_rel_err: f64,
    pub coords_checked: usize,
    /// Non-finite central differences; reported as failures, never panics.
    pub non_finite: usize,
    /// (tensor index, flat coordinate) of the worst coordinate.
    pub worst: Option<(usize, usize)>,
}

/// Compare analytic gradients against central finite differences of a scalar
/// loss. Checks every coordinate when the parameter count is at most
/// `max_coords`, otherwise a uniform random sample of that size.
pub fn grad_check<E: Real>(
    loss_fn: impl Fn(&[Tensor<E>]) -> E,
    params: &[Tensor<E>],
    analytic: &[Tensor<E>],
    epsilon: f64,
    max_coords: usize,
    rng: &mut impl Rng,
) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len(), "gradient set mismatch");
    for (p, a) in params.iter().zip(analytic) {
        assert_eq!(p.shape(), a.shape(), "gradient shape mismatch");
    }
    let sizes: Vec<usize> = params.iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    let coords: Vec<usize> = if total <= max_coords {
        (0..total).collect()
    } else {
        (0..max_coords).map(|_| rng.gen_range(0..total)).collect()
    };

    let mut work: Vec<Tensor<E>> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        coords_checked: 0,
        non_finite: 0,
        worst: None,
    };
    for flat in coords {
        let (ti, ci) = locate(&sizes, flat);
        let orig = work[ti].data()[ci];
        let eps = E::from_f64(epsilon).expect("epsilon");

        work[ti].data_mut()[ci] = orig + eps;
        let plus = loss_fn(&work).to_f64().unwrap_or(f64::NAN);
        work[ti].data_mut()[ci] = orig - eps;
        let minus = loss_fn(&work).to_f64().unwrap_or(f64::NAN);
        work[ti].data_mut()[ci] = orig;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let reference = analytic[ti].data()[ci].to_f64().unwrap_or(f64::NAN);
        report.coords_checked += 1;
        if !numeric.is_finite() || !reference.is_finite() {
            report.non_finite += 1;
            report.max_rel_err = f64::INFINITY;
            report.worst = Some((ti, ci));
            continue;
        }
        let rel = (reference - numeric).abs() / reference.abs().max(1.0);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = Some((ti, ci));
        }
    }
    report
}

fn locate(sizes: &[usize], mut flat: usize) -> (usize, usize) {
    for (i, &s) in sizes.iter().enumerate() {
        if flat < s {
            return (i, flat);
        }
        flat -= s;
    }
    unreachable!("coordinate out of range");
}
