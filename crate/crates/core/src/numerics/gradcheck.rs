//! Central finite-difference validation of analytic gradients.

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Coordinate where `max_rel_err` was attained.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Set when the objective was non-finite at some perturbed point.
    pub non_finite: bool,
    pub pass: bool,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `f` at `params`.
///
/// `f` must be deterministic; `params` is perturbed one coordinate at a time
/// by `±step`.
pub fn finite_diff_check<F>(
    mut f: F,
    params: &[f64],
    analytic: &[f64],
    step: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(crate::Error::arg("finite difference step must be positive"));
    }
    if analytic.len() != params.len() {
        return Err(crate::Error::arg(format!(
            "analytic gradient has {} entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut theta = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        non_finite: false,
        pass: true,
    };
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + step;
        let up = f(&theta)?;
        theta[i] = orig - step;
        let down = f(&theta)?;
        theta[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            report.non_finite = true;
            report.pass = false;
            report.worst_index = i;
            report.max_rel_err = f64::INFINITY;
            continue;
        }
        let numeric = (up - down) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_err || !err.is_finite() {
            report.max_rel_err = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    report.pass = !report.non_finite && report.max_rel_err < tol;
    Ok(report)
}
