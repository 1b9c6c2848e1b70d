use super::models::Differentiable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(|analytic| + |numeric|, 1e-12)` over all scalars.
    pub max_relative_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares analytic gradients against central finite differences,
/// perturbing every scalar parameter by `±eps`.
pub fn gradient_check<M: Differentiable>(model: &M, batch: &M::Batch, eps: f64) -> Result<GradCheckReport> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let (_, analytic) = model.loss_and_grads(batch)?;
    let names: Vec<String> = analytic.params().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = analytic
        .params()
        .into_iter()
        .map(|(_, m)| m.as_slice().to_vec())
        .collect();

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    for (tensor, grads) in analytic.iter().enumerate() {
        for (k, &a) in grads.iter().enumerate() {
            let original = probe.params_mut()[tensor].as_slice()[k];
            probe.params_mut()[tensor].as_mut_slice()[k] = original + eps;
            let plus = probe.loss(batch)?;
            probe.params_mut()[tensor].as_mut_slice()[k] = original - eps;
            let minus = probe.loss(batch)?;
            probe.params_mut()[tensor].as_mut_slice()[k] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
            report.checked += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_param = names[tensor].clone();
                report.worst_index = k;
            }
        }
    }
    Ok(report)
}
