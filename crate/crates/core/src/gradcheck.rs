//! Central finite differences for checking analytic gradients.

use alloc::vec::Vec;

/// Step used by the gradient suites.
pub const STEP: f64 = 1e-5;

/// Below this the numeric gradient counts as zero and the error becomes
/// absolute.
pub const ERROR_FLOOR: f64 = 1e-6;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate. `x` is
/// restored before returning.
pub fn central_difference<F>(x: &mut [f64], h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(x);
        x[i] = orig - h;
        let down = f(x);
        x[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// `max_i |a_i - n_i| / max(max_i |n_i|, ERROR_FLOOR)`.
///
/// Normalizing by the largest numeric component keeps tiny entries from
/// inflating the error while still catching any wrong coordinate.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(ERROR_FLOOR);
    let diff = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    diff / scale
}
