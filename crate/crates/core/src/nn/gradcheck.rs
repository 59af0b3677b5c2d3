//! Central finite-difference gradient verification.

/// Largest relative error found by [`check_gradients`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    /// Parameter index with the largest error.
    pub worst_index: usize,
    pub checked: usize,
}

impl GradReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Gradients smaller than this are compared in absolute terms.
const SCALE_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(SCALE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares `analytic[i]` with `(f(i, +h) - f(i, -h)) / 2h` for every `i` in
/// `indices`, where `f(i, delta)` evaluates the loss with parameter `i`
/// displaced by `delta`.
pub fn check_gradients<F>(analytic: &[f64], indices: &[usize], step: f64, mut loss: F) -> GradReport
where
    F: FnMut(usize, f64) -> f64,
{
    let mut report = GradReport { max_rel_error: 0.0, worst_index: 0, checked: 0 };
    for &i in indices {
        let numeric = (loss(i, step) - loss(i, -step)) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
            report.worst_index = i;
        }
        report.checked += 1;
    }
    report
}
