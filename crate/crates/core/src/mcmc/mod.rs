//! ABC Markov chain Monte Carlo.
//!
//! Every sampler here keeps the current state's simulated summaries and
//! compares kernel masses, so the likelihood is never evaluated.

mod augmented;
mod chain;
mod trace;

pub use augmented::{augmented_h_mcmc, AugmentedConfig, HProposal, PseudoPrior, UpdateScheme};
pub use chain::{
    abc_mcmc, abc_mcmc_method2, abc_mcmc_method3, log_acceptance, McmcConfig, DEFAULT_INIT_MAX_TRIES,
    DEFAULT_PER_ITER_SIM_CAP,
};
pub use trace::{truncate_by_h, ChainRecord, ChainState, ChainTrace};
