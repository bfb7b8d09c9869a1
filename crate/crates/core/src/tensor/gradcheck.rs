/// `|a − n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient returned by `f` against central
/// differences at every coordinate and returns the worst relative error.
///
/// `f` maps parameters to `(loss, gradient)`; only the loss is used at the
/// perturbed points.
pub fn finite_diff_check<F>(f: F, params: &[f64], step: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let all: Vec<usize> = (0..params.len()).collect();
    finite_diff_check_at(f, params, step, &all)
}

/// Like [`finite_diff_check`] but only probes the given coordinates.
pub fn finite_diff_check_at<F>(mut f: F, params: &[f64], step: f64, coords: &[usize]) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    assert_eq!(analytic.len(), params.len(), "gradient length");
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = p[i];
        p[i] = orig + step;
        let (up, _) = f(&p);
        p[i] = orig - step;
        let (down, _) = f(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}
