use crate::error::{AbcError, Result};
use crate::kernel::SmoothingKernel;
use crate::types::{ParamVector, SummaryVector};
use crate::weights::log_kernel_mass;

/// The current state of an ABC chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: ParamVector,
    pub summaries: Vec<SummaryVector>,
    /// Replicate distances to the observed summary.
    pub distances: Vec<f64>,
    /// `ln((1/T) Σₜ K_h(dₜ))` under `h_current`.
    pub log_mass: f64,
    pub h_current: f64,
}

impl ChainState {
    pub fn new(
        theta: ParamVector,
        summaries: Vec<SummaryVector>,
        distances: Vec<f64>,
        kernel: &SmoothingKernel,
    ) -> Self {
        let log_mass = log_kernel_mass(kernel, &distances);
        Self { theta, summaries, distances, log_mass, h_current: kernel.scale() }
    }

    pub fn kernel_mass(&self) -> f64 {
        self.log_mass.exp()
    }

    /// Recompute the cached mass from the stored distances.
    pub fn check_mass(&self, kernel: &SmoothingKernel) -> bool {
        let fresh = log_kernel_mass(&kernel.with_scale(self.h_current).unwrap_or(*kernel), &self.distances);
        fresh == self.log_mass || (fresh - self.log_mass).abs() <= 1e-12 * fresh.abs().max(1.0)
    }
}

/// One row of a chain trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub theta: ParamVector,
    pub log_mass: f64,
    /// Whether the move into this state was accepted. False for the initial
    /// state and for repeats.
    pub accepted: bool,
    pub h: f64,
    /// Simulator calls made up to and including this iteration.
    pub cumulative_calls: u64,
}

impl ChainRecord {
    pub fn kernel_mass(&self) -> f64 {
        self.log_mass.exp()
    }
}

/// The output of an ABC-MCMC run: `N + 1` states including the initial one.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainTrace {
    pub states: Vec<ChainRecord>,
    pub acceptance_count: u64,
    pub simulator_calls: u64,
    /// Simulator calls spent during initialisation, included in `simulator_calls`.
    pub init_calls: u64,
    /// Replicate summaries per state, when requested.
    pub summaries: Option<Vec<Vec<SummaryVector>>>,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn iterations(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.iterations() == 0 {
            0.0
        } else {
            self.acceptance_count as f64 / self.iterations() as f64
        }
    }

    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.theta[k]).collect()
    }

    /// Coordinate `k` after discarding the first `burn_in` states.
    pub fn coordinate_after(&self, k: usize, burn_in: usize) -> Vec<f64> {
        self.states.iter().skip(burn_in).map(|s| s.theta[k]).collect()
    }

    pub fn thetas(&self) -> Vec<ParamVector> {
        self.states.iter().map(|s| s.theta.clone()).collect()
    }

    pub fn h_path(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.h).collect()
    }

    /// Simulator calls made by each iteration (excluding initialisation).
    pub fn calls_per_iteration(&self) -> Vec<u64> {
        self.states.windows(2).map(|w| w[1].cumulative_calls - w[0].cumulative_calls).collect()
    }
}

/// The states of an augmented-tolerance chain whose tolerance is at most
/// `h_star`.
pub fn truncate_by_h(trace: &ChainTrace, h_star: f64) -> Result<Vec<ParamVector>> {
    let kept: Vec<ParamVector> = trace.states.iter().filter(|s| s.h <= h_star).map(|s| s.theta.clone()).collect();
    if kept.is_empty() {
        return Err(AbcError::DegenerateSelection(format!("no states with h <= {h_star}")));
    }
    Ok(kept)
}
