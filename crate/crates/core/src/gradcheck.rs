//! Central finite-difference verification of analytic gradients.

use ndarray::Array2;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative error used throughout: `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central-difference estimate of the gradient of `f` at `x`.
pub fn numeric_gradient<F>(f: F, x: &Array2<f64>, step: f64) -> Array2<f64>
where
    F: Fn(&Array2<f64>) -> f64,
{
    let mut probe = x.clone();
    let mut grad = Array2::zeros(x.dim());
    for (idx, g) in grad.indexed_iter_mut() {
        let orig = probe[idx];
        probe[idx] = orig + step;
        let up = f(&probe);
        probe[idx] = orig - step;
        let down = f(&probe);
        probe[idx] = orig;
        *g = (up - down) / (2.0 * step);
    }
    grad
}

/// Maximum relative error between `analytic` and central differences of `f`.
pub fn finite_diff_check<F>(f: F, x: &Array2<f64>, analytic: &Array2<f64>, step: f64) -> f64
where
    F: Fn(&Array2<f64>) -> f64,
{
    assert_eq!(x.dim(), analytic.dim(), "gradient shape mismatch");
    let numeric = numeric_gradient(f, x, step);
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Same check over a flat parameter vector.
pub fn finite_diff_check_vec<F>(f: F, x: &[f64], analytic: &[f64], step: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
    let mut probe = x.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = f(&probe);
        probe[i] = orig - step;
        let down = f(&probe);
        probe[i] = orig;
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * step)));
    }
    worst
}
