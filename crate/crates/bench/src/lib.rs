//! Shared fixtures for the benchmarks in `benches/`.

use std::sync::Arc;

use likefree_core::models::{exact_posterior, NormalMeanModel};
use likefree_core::{DistanceMetric, KernelFamily, PriorProposal, Problem, SmoothingKernel};

/// The conjugate normal-mean problem.
pub fn normal_mean_problem() -> Problem {
    Problem::from_model(Arc::new(NormalMeanModel::default()), DistanceMetric::Euclidean).expect("valid fixture")
}

pub fn prior(problem: &Problem) -> PriorProposal {
    PriorProposal::new(problem.model_arc())
}

pub fn posterior_sd() -> f64 {
    exact_posterior(&NormalMeanModel::default()).1
}

/// Kernel at `fraction` times the exact posterior sd.
pub fn kernel(family: KernelFamily, fraction: f64) -> SmoothingKernel {
    SmoothingKernel::new(family, fraction * posterior_sd()).expect("positive scale")
}
