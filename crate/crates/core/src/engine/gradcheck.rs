//! Central finite-difference verification of analytic gradients.

use super::param::Parameterized;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat offset of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient of `loss` against central differences with
/// step `h`, for every scalar in every parameter of `model`.
///
/// `loss(model, true)` must run forward and backward, accumulating into the
/// parameter gradients; `loss(model, false)` only needs the forward value.
/// Both must be deterministic (e.g. dropout masks drawn from a freshly seeded
/// generator on every call).
pub fn gradient_check<M, F>(model: &mut M, mut loss: F, h: f64) -> Result<GradCheckReport>
where
    M: Parameterized + ?Sized,
    F: FnMut(&mut M, bool) -> Result<f64>,
{
    model.zero_grads();
    loss(model, true)?;
    let analytic: Vec<(String, Vec<f64>)> = model
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.grad.data().to_vec()))
        .collect();
    model.zero_grads();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (pi, (name, grads)) in analytic.iter().enumerate() {
        for (k, &a) in grads.iter().enumerate() {
            let original = model.params()[pi].value.data()[k];
            model.params_mut()[pi].value.data_mut()[k] = original + h;
            let up = loss(model, false)?;
            model.params_mut()[pi].value.data_mut()[k] = original - h;
            let down = loss(model, false)?;
            model.params_mut()[pi].value.data_mut()[k] = original;
            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), k));
            }
        }
    }
    Ok(report)
}
