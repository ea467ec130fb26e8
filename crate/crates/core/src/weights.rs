//! Importance-weight arithmetic and kernel masses.

use crate::distance::DistanceMetric;
use crate::error::{AbcError, Result};
use crate::kernel::SmoothingKernel;
use crate::types::SummaryVector;

fn check_raw(raw: &[f64]) -> Result<()> {
    if raw.is_empty() {
        return Err(AbcError::InvalidInput("weight list is empty".into()));
    }
    if let Some(w) = raw.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(AbcError::InvalidInput(format!("raw weight {w} is not finite and nonnegative")));
    }
    Ok(())
}

/// `W⁽ⁱ⁾ = w̃⁽ⁱ⁾ / Σ w̃⁽ʲ⁾`.
pub fn normalise_weights(raw: &[f64]) -> Result<Vec<f64>> {
    check_raw(raw)?;
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(AbcError::DegeneratePopulation { n: raw.len() });
    }
    Ok(raw.iter().map(|w| w / total).collect())
}

/// `(Σ Wᵢ²)⁻¹` for weights that already sum to one.
pub fn effective_sample_size(normalised: &[f64]) -> Result<f64> {
    check_raw(normalised)?;
    let total: f64 = normalised.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(AbcError::InvalidInput(format!(
            "weights must be normalised (sum = {total})"
        )));
    }
    ess_from_raw(normalised)
}

/// `(Σ w)² / Σ w²` on unnormalised weights. Exact for equal integer weights.
pub fn ess_from_raw(raw: &[f64]) -> Result<f64> {
    check_raw(raw)?;
    let max = raw.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(AbcError::DegeneratePopulation { n: raw.len() });
    }
    // Rescaling by the maximum guards Σw² against overflow and underflow.
    let (sum, sum_sq) = raw.iter().fold((0.0, 0.0), |(s, q), w| {
        let x = w / max;
        (s + x, q + x * x)
    });
    Ok(sum * sum / sum_sq)
}

/// `(1/T) Σₜ K_h(‖s(t) − s_obs‖)`.
pub fn weighted_kernel_mass(
    kernel: &SmoothingKernel,
    metric: &DistanceMetric,
    summaries: &[SummaryVector],
    s_obs: &SummaryVector,
) -> Result<f64> {
    if summaries.is_empty() {
        return Err(AbcError::InvalidInput("at least one summary replicate is required".into()));
    }
    let mut total = 0.0;
    for s in summaries {
        total += kernel.eval(metric.distance(s, s_obs)?)?;
    }
    Ok(total / summaries.len() as f64)
}

/// `ln((1/T) Σₜ K_h(dₜ))` from precomputed distances, stable for tiny `h`.
pub fn log_kernel_mass(kernel: &SmoothingKernel, distances: &[f64]) -> f64 {
    let logs = distances.iter().map(|&d| kernel.log_eval(d));
    log_sum_exp(logs) - (distances.len() as f64).ln()
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}
