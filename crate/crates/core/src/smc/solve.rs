use crate::error::{AbcError, Result};
use crate::kernel::{KernelFamily, SmoothingKernel};
use crate::weights::log_sum_exp;

/// Result of a tolerance solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HSolve {
    pub h: f64,
    /// ESS of the reweighted population at `h`.
    pub ess: f64,
    pub target: f64,
    /// No scale brings the ESS down to the target.
    pub stalled: bool,
}

/// `ln Σₜ K_h(dₜ) / K_h(0)`.
pub fn log_relative_mass(kernel: &SmoothingKernel, distances: &[f64]) -> f64 {
    log_sum_exp(distances.iter().map(|&d| kernel.log_relative(d)))
}

fn ess_of_logs(logs: &[f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    let (s, s2) = logs.iter().fold((0.0, 0.0), |(s, s2), l| {
        let w = (l - max).exp();
        (s + w, s2 + w * w)
    });
    s * s / s2
}

/// Reweighting of a population from `h_prev` to a smaller scale.
pub struct Reweighting<'a> {
    family: KernelFamily,
    distances: &'a [Vec<f64>],
    /// `ln w_{m−1} − ln Σₜ K_{h_{m−1}}(dₜ)`; `-∞` for dead particles.
    base: Vec<f64>,
}

impl<'a> Reweighting<'a> {
    pub fn new(previous: &[f64], distances: &'a [Vec<f64>], family: KernelFamily, h_prev: f64) -> Result<Self> {
        if previous.len() != distances.len() {
            return Err(AbcError::DimensionMismatch { expected: previous.len(), got: distances.len() });
        }
        let prev_kernel = kernel(family, h_prev);
        let base = previous
            .iter()
            .zip(distances)
            .map(|(&w, d)| {
                if !(w > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let denom = log_relative_mass(&prev_kernel, d);
                if denom == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    w.ln() - denom
                }
            })
            .collect();
        Ok(Self { family, distances, base })
    }

    /// Log weights at scale `h`.
    pub fn log_weights(&self, h: f64) -> Vec<f64> {
        let k = kernel(self.family, h);
        self.base
            .iter()
            .zip(self.distances)
            .map(|(&b, d)| if b == f64::NEG_INFINITY { b } else { b + log_relative_mass(&k, d) })
            .collect()
    }

    pub fn ess(&self, h: f64) -> f64 {
        ess_of_logs(&self.log_weights(h))
    }

    /// Raw weights at `h`, scaled so the largest is one.
    pub fn weights(&self, h: f64) -> Vec<f64> {
        let logs = self.log_weights(h);
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        logs.iter().map(|l| if max.is_finite() { (l - max).exp() } else { 0.0 }).collect()
    }
}

fn kernel(family: KernelFamily, h: f64) -> SmoothingKernel {
    if h.is_infinite() {
        SmoothingKernel::infinite(family)
    } else {
        SmoothingKernel::new(family, h).expect("positive finite scale")
    }
}

/// Find `h ∈ (0, h_prev]` with `ESS(h) = α · ESS(h_prev)`, where the weights
/// at `h` are `w_{m−1} · Σₜ K_h(dₜ) / Σₜ K_{h_{m−1}}(dₜ)` evaluated from the
/// stored distances.
///
/// For the uniform kernel the ESS is a step function and the result is the
/// largest `h` with `ESS(h) <= target`.
pub fn solve_next_h(
    previous: &[f64],
    distances: &[Vec<f64>],
    family: KernelFamily,
    alpha: f64,
    h_prev: f64,
) -> Result<HSolve> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(AbcError::Config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if !(h_prev > 0.0) {
        return Err(AbcError::InvalidInput(format!("previous scale must be positive, got {h_prev}")));
    }
    let rw = Reweighting::new(previous, distances, family, h_prev)?;
    let ess_prev = rw.ess(h_prev);
    let target = alpha * ess_prev;
    if !(target >= 1.0) {
        return Err(AbcError::InvalidInput(format!("target ESS {target} is below one")));
    }
    if alpha == 1.0 {
        return Ok(HSolve { h: h_prev, ess: ess_prev, target, stalled: false });
    }
    let tol = (1e-8 * ess_prev).max(1e-10);
    let done = |h: f64, ess: f64| HSolve { h, ess, target, stalled: false };

    let mut hi = h_prev;
    let mut ess_hi = ess_prev;
    if hi.is_infinite() {
        let reach = distances
            .iter()
            .zip(&rw.base)
            .filter(|(_, b)| b.is_finite())
            .flat_map(|(d, _)| d.iter().copied())
            .fold(0.0, f64::max);
        if reach == 0.0 {
            return Ok(HSolve { h: f64::MIN_POSITIVE, ess: ess_prev, target, stalled: true });
        }
        hi = reach;
        ess_hi = rw.ess(hi);
        while ess_hi < target {
            hi *= 2.0;
            ess_hi = rw.ess(hi);
        }
    }
    if family != KernelFamily::Uniform && (ess_hi - target).abs() <= tol {
        return Ok(done(hi, ess_hi));
    }
    let mut lo = hi;
    let mut ess_lo = ess_hi;
    while ess_lo > target {
        let next = lo * 0.5;
        if next < hi * 1e-15 {
            return Ok(HSolve { h: lo, ess: ess_lo, target, stalled: true });
        }
        lo = next;
        ess_lo = rw.ess(lo);
        if family != KernelFamily::Uniform && (ess_lo - target).abs() <= tol {
            return Ok(done(lo, ess_lo));
        }
    }
    // ESS(lo) <= target < ESS(hi).
    for _ in 0..4096 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let ess = rw.ess(mid);
        if family != KernelFamily::Uniform && (ess - target).abs() <= tol {
            return Ok(done(mid, ess));
        }
        if ess <= target {
            lo = mid;
            ess_lo = ess;
        } else {
            hi = mid;
        }
    }
    Ok(HSolve { h: lo, ess: ess_lo, target, stalled: ess_lo < 1.0 })
}
