/// Central-difference gradient of a scalar function.
pub fn numeric_gradient<F>(mut f: F, point: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let plus = f(&x);
            x[i] = orig - step;
            let minus = f(&x);
            x[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Smallest denominator used by [`finite_difference_check`].
pub const GRADCHECK_FLOOR: f64 = 1e-5;

/// Compares `analytic` against central differences of `f` at `point`.
///
/// Returns the largest per-coordinate `|a - n| / max(|a|, |n|, GRADCHECK_FLOOR)`.
/// The floor keeps coordinates whose true gradient is zero from turning
/// central-difference rounding noise (up to about `1e-10` for `f64`) into a
/// large relative error.
pub fn finite_difference_check<F>(f: F, point: &[f64], analytic: &[f64], step: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(point.len(), analytic.len(), "gradient length must match point");
    numeric_gradient(f, point, step)
        .iter()
        .zip(analytic)
        .map(|(&n, &a)| (a - n).abs() / a.abs().max(n.abs()).max(GRADCHECK_FLOOR))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_matches() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[1];
        let err = finite_difference_check(f, &[2.0, -1.0], &[4.0, 3.0], 1e-5);
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn detects_wrong_gradient() {
        let f = |x: &[f64]| x[0] * x[0];
        assert!(finite_difference_check(f, &[1.0], &[3.0], 1e-5) > 0.1);
    }
}
