use rand_distr::{Distribution, StandardNormal};

use super::chain::{initialise, log_acceptance, log_prior_proposal_ratio, TraceBuilder};
use super::trace::{ChainState, ChainTrace};
use crate::error::{AbcError, Result};
use crate::kernel::{KernelFamily, SmoothingKernel};
use crate::model::{Problem, ProposalKernel};
use crate::rng::{stages, SeedSource};
use crate::sampling::open_uniform;
use crate::weights::log_kernel_mass;

/// A proper pseudo-prior on the tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PseudoPrior {
    /// Exponential with the given rate, truncated to `(0, h_max]`. A rate of
    /// zero gives the uniform density on `(0, h_max]`.
    TruncatedExponential { rate: f64, h_max: f64 },
}

impl PseudoPrior {
    pub fn validate(&self) -> Result<()> {
        let PseudoPrior::TruncatedExponential { rate, h_max } = *self;
        if !(rate >= 0.0 && rate.is_finite()) || !(h_max > 0.0 && h_max.is_finite()) {
            return Err(AbcError::Config("pseudo-prior needs rate >= 0 and finite h_max > 0".into()));
        }
        Ok(())
    }

    pub fn h_max(&self) -> f64 {
        let PseudoPrior::TruncatedExponential { h_max, .. } = *self;
        h_max
    }

    pub fn log_density(&self, h: f64) -> f64 {
        let PseudoPrior::TruncatedExponential { rate, h_max } = *self;
        if !(h > 0.0 && h <= h_max) {
            return f64::NEG_INFINITY;
        }
        if rate == 0.0 {
            return -h_max.ln();
        }
        rate.ln() - rate * h - (-(-rate * h_max).exp_m1()).ln()
    }

    /// Mean of the pseudo-prior.
    pub fn mean(&self) -> f64 {
        let PseudoPrior::TruncatedExponential { rate, h_max } = *self;
        if rate == 0.0 {
            return h_max / 2.0;
        }
        let e = (-rate * h_max).exp();
        1.0 / rate - h_max * e / (1.0 - e)
    }
}

/// How the tolerance moves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HProposal {
    /// `ln h′ = ln h + sd · z`.
    LogNormalWalk { sd: f64 },
    /// The tolerance never moves and no draw is made for it.
    Fixed,
}

impl HProposal {
    /// Draw `h′` and return it with `ln q(h′ → h) − ln q(h → h′)`.
    fn step(&self, h: f64, rng: &mut crate::rng::StreamRng) -> (f64, f64) {
        match *self {
            HProposal::LogNormalWalk { sd } => {
                let z: f64 = StandardNormal.sample(rng);
                let h_new = h * (sd * z).exp();
                (h_new, (h_new / h).ln())
            }
            HProposal::Fixed => (h, 0.0),
        }
    }
}

/// Whether θ and h move together or in turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateScheme {
    #[default]
    Joint,
    /// A θ move at the current h, then an h move that reuses the summaries.
    ComponentWise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedConfig {
    pub family: KernelFamily,
    pub iterations: usize,
    pub t: usize,
    pub initial_h: f64,
    pub h_proposal: HProposal,
    pub pseudo_prior: PseudoPrior,
    pub scheme: UpdateScheme,
    pub init_max_tries: u64,
}

/// ABC-MCMC on `(θ, s, h)` with target
/// `∝ K_h(‖s − s_obs‖) p(s | θ) π(θ) π(h)`.
///
/// With [`HProposal::Fixed`] and the joint scheme the trace is identical to
/// [`abc_mcmc`](super::abc_mcmc) at `initial_h` under the same seed.
pub fn augmented_h_mcmc(problem: &Problem, proposal: &dyn ProposalKernel, cfg: &AugmentedConfig, seed: u64) -> Result<ChainTrace> {
    cfg.pseudo_prior.validate()?;
    if cfg.t == 0 {
        return Err(AbcError::Config("T must be at least 1".into()));
    }
    if cfg.pseudo_prior.log_density(cfg.initial_h) == f64::NEG_INFINITY {
        return Err(AbcError::Config(format!("initial h {} is outside the pseudo-prior support", cfg.initial_h)));
    }
    if let HProposal::LogNormalWalk { sd } = cfg.h_proposal {
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(AbcError::Config("h proposal sd must be positive".into()));
        }
    }
    let seeds = SeedSource::new(seed);
    let kernel_at = |h: f64| SmoothingKernel::new(cfg.family, h);
    let (mut state, tries) = initialise(problem, &kernel_at(cfg.initial_h)?, cfg.t, cfg.init_max_tries, seeds)?;
    let mut out = TraceBuilder::new(&state, tries * cfg.t as u64, cfg.iterations, false);
    let fixed = cfg.h_proposal == HProposal::Fixed;
    for i in 1..=cfg.iterations {
        let mut rng = seeds.stream(stages::CHAIN, i as u64);
        let h = state.h_current;
        let proposed = proposal.sample(&state.theta, &mut rng);
        let (lp_new, lp_cur, rev, fwd) = log_prior_proposal_ratio(problem, proposal, &state.theta, &proposed);
        match cfg.scheme {
            UpdateScheme::Joint => {
                let (h_new, log_qh) = cfg.h_proposal.step(h, &mut rng);
                let lph_new = cfg.pseudo_prior.log_density(h_new);
                if lp_new == f64::NEG_INFINITY || lph_new == f64::NEG_INFINITY {
                    out.push(&state, false, 0);
                    continue;
                }
                let (s, d) = problem.simulate_replicates(&proposed, cfg.t, &mut rng)?;
                let kernel = kernel_at(h_new)?;
                let lm_new = log_kernel_mass(&kernel, &d);
                let extra = if fixed { 0.0 } else { lph_new - cfg.pseudo_prior.log_density(h) + log_qh };
                let log_alpha = log_acceptance(lm_new, state.log_mass, lp_new, lp_cur, rev, fwd) + extra;
                let accept = open_uniform(&mut rng).ln() <= log_alpha.min(0.0);
                if accept {
                    state = ChainState { theta: proposed, summaries: s, distances: d, log_mass: lm_new, h_current: h_new };
                }
                out.push(&state, accept, cfg.t as u64);
            }
            UpdateScheme::ComponentWise => {
                let mut moved = false;
                let mut calls = 0;
                if lp_new > f64::NEG_INFINITY {
                    let (s, d) = problem.simulate_replicates(&proposed, cfg.t, &mut rng)?;
                    calls = cfg.t as u64;
                    let lm_new = log_kernel_mass(&kernel_at(h)?, &d);
                    if open_uniform(&mut rng).ln() <= log_acceptance(lm_new, state.log_mass, lp_new, lp_cur, rev, fwd) {
                        state = ChainState { theta: proposed, summaries: s, distances: d, log_mass: lm_new, h_current: h };
                        moved = true;
                    }
                }
                let (h_new, log_qh) = cfg.h_proposal.step(h, &mut rng);
                let lph_new = cfg.pseudo_prior.log_density(h_new);
                if !fixed && lph_new > f64::NEG_INFINITY {
                    let lm_h = log_kernel_mass(&kernel_at(h_new)?, &state.distances);
                    let log_alpha = log_acceptance(lm_h, state.log_mass, lph_new, cfg.pseudo_prior.log_density(h), log_qh, 0.0);
                    if open_uniform(&mut rng).ln() <= log_alpha {
                        state.log_mass = lm_h;
                        state.h_current = h_new;
                        moved = true;
                    }
                }
                out.push(&state, moved, calls);
            }
        }
    }
    Ok(out.finish())
}
