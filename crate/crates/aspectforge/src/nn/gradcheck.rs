//! Central-difference gradient verification.
//!
//! The loss closure is called once with gradient accumulation to collect
//! analytic gradients, then repeatedly without it while single coordinates
//! are nudged by `+eps` / `-eps`. The closure must be deterministic: any
//! stochastic part (dropout, shuffling) has to be frozen by the caller, and
//! a disagreement between two identical calls is reported as an error
//! rather than a bogus gradient mismatch.

use super::ParameterSet;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate, with its
    /// analytic and numeric derivatives.
    pub worst: Option<(String, usize, f64, f64)>,
    pub coords_checked: usize,
}

/// Relative error between an analytic and a numeric derivative, damped so
/// tiny derivatives are compared on an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1.0_f64.max(analytic.abs()).max(numeric.abs())
}

/// Verifies every coordinate of every parameter in `params` against a
/// central difference with step `epsilon`.
///
/// `loss(params, accumulate)` must return the scalar loss; when
/// `accumulate` is true it must also add gradients into `params`.
pub fn gradient_check<F>(
    params: &mut ParameterSet,
    epsilon: f64,
    mut loss: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParameterSet, bool) -> Result<f64>,
{
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid(format!("gradient check step {epsilon} must be positive")));
    }

    params.zero_grads();
    let loss_with_grads = loss(params, true)?;
    let analytic: Vec<(String, Vec<f64>)> = params
        .iter()
        .map(|(name, p)| (name.to_string(), p.grad.data().to_vec()))
        .collect();

    let probe_a = loss(params, false)?;
    let probe_b = loss(params, false)?;
    if probe_a.to_bits() != probe_b.to_bits() || probe_a.to_bits() != loss_with_grads.to_bits() {
        return Err(Error::GradientCheck(format!(
            "loss closure is not deterministic: {loss_with_grads} vs {probe_a} vs {probe_b}"
        )));
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coords_checked: 0,
    };

    for (name, grads) in &analytic {
        for (idx, &a) in grads.iter().enumerate() {
            let orig = params.value(name).data()[idx];

            params.value_mut(name).data_mut()[idx] = orig + epsilon;
            let loss_plus = loss(params, false)?;
            params.value_mut(name).data_mut()[idx] = orig - epsilon;
            let loss_minus = loss(params, false)?;
            params.value_mut(name).data_mut()[idx] = orig;

            let numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
            if !numeric.is_finite() {
                return Err(Error::non_finite(format!("numeric derivative of {name}[{idx}]")));
            }
            let rel = relative_error(a, numeric);
            report.coords_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), idx, a, numeric));
            }
        }
    }
    Ok(report)
}
