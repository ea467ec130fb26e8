//! Likelihood-free Bayesian inference by approximate Bayesian computation.
//!
//! Samplers target the ABC posterior
//! `π_ABC(θ | s_obs) ∝ π(θ) ∫ K_h(‖s − s_obs‖) p(s | θ) ds`
//! for a model that can be simulated but whose likelihood cannot be
//! evaluated. Every sampler is reproducible from a single master seed
//! regardless of how many worker threads run it.

pub mod diagnostics;
pub mod distance;
pub mod error;
mod exec;
pub mod importance;
pub mod kernel;
pub mod mcmc;
pub mod model;
pub mod models;
pub mod rejection;
pub mod rng;
mod sampling;
pub mod smc;
pub mod types;
pub mod weights;

pub use diagnostics::RunStatistics;
pub use distance::{distance, DistanceMetric};
pub use error::{AbcError, Result};
pub use kernel::{kernel_at_zero, kernel_eval, KernelFamily, SmoothingKernel};
pub use mcmc::{ChainRecord, ChainState, ChainTrace};
pub use model::{
    GaussianRandomWalk, GenerativeModel, MultivariateNormal, NormalProposal, PriorProposal, Problem, Proposal,
    ProposalKernel,
};
pub use rng::{derive_rng_stream, SeedSource, StreamId, StreamRng};
pub use types::{ParamVector, ParticlePopulation, SummaryVector, WeightedParticle};
pub use weights::{effective_sample_size, ess_from_raw, normalise_weights, weighted_kernel_mass};
