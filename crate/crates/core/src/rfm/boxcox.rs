use serde::{Deserialize, Serialize};

use super::optimize::brent_minimize;
use crate::error::{Error, Result};

/// Offset added above the minimum when inputs are not strictly positive.
pub const SHIFT_EPSILON: f64 = 1e-6;
/// |λ| below this takes the logarithmic branch.
pub const LOG_BRANCH_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCoxParams {
    pub lambda: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchInterval {
    pub lo: f64,
    pub hi: f64,
}

impl Default for SearchInterval {
    fn default() -> Self {
        Self { lo: -5.0, hi: 5.0 }
    }
}

fn power(x: f64, lambda: f64) -> f64 {
    if lambda.abs() < LOG_BRANCH_THRESHOLD {
        x.ln()
    } else {
        (lambda * x.ln()).exp_m1() / lambda
    }
}

/// Box-Cox transform of one value: `(x^λ - 1)/λ`, or `ln x` when λ is zero,
/// applied to `value + shift`.
pub fn boxcox_transform(value: f64, params: &BoxCoxParams) -> Result<f64> {
    let x = value + params.shift;
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid(format!(
            "Box-Cox needs a positive shifted value, got {value} + {}",
            params.shift
        )));
    }
    Ok(power(x, params.lambda))
}

/// Profile log-likelihood of λ under a normal model for the transformed data
/// (constants dropped): `(λ-1) Σ ln x - n/2 ln σ²(λ)`.
pub fn boxcox_log_likelihood(shifted: &[f64], lambda: f64) -> f64 {
    let n = shifted.len() as f64;
    let log_sum: f64 = shifted.iter().map(|x| x.ln()).sum();
    let y: Vec<f64> = shifted.iter().map(|&x| power(x, lambda)).collect();
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (lambda - 1.0) * log_sum - 0.5 * n * var.ln()
}

/// Maximum-likelihood λ over `search` by bounded Brent search (x-tolerance 1e-6).
pub fn boxcox_lambda_mle(values: &[f64], search: SearchInterval) -> Result<BoxCoxParams> {
    if values.len() < 3 {
        return Err(Error::invalid("Box-Cox fit needs at least 3 values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Box-Cox input".into()));
    }
    if !(search.lo < search.hi) {
        return Err(Error::invalid("empty Box-Cox search interval"));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Err(Error::invalid(
            "all Box-Cox inputs identical; likelihood is degenerate",
        ));
    }
    let shift = (SHIFT_EPSILON - min).max(0.0);
    let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
    let objective = |l: f64| {
        let ll = boxcox_log_likelihood(&shifted, l);
        if ll.is_nan() {
            f64::INFINITY
        } else {
            -ll
        }
    };
    let (lambda, _) = brent_minimize(objective, search.lo, search.hi, 1e-6, 500);
    Ok(BoxCoxParams { lambda, shift })
}

/// Sample skewness (population moments).
pub fn skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    if m2 == 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}
