//! Shared helpers for the unit-test suite.

/// Central finite differences of `f` at `x`: the independent gradient oracle
/// used by the gradient-correctness tests.
pub fn finite_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + eps;
        let hi = f(&xp);
        xp[i] = orig - eps;
        let lo = f(&xp);
        xp[i] = orig;
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    grad
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
