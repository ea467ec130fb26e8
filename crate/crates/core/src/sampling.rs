//! Pieces shared by the independence samplers.

use rand::Rng;

use crate::error::{AbcError, Result};
use crate::exec::par_map_indexed;
use crate::model::{Problem, Proposal};
use crate::rng::{stages, SeedSource, StreamRng};
use crate::types::ParamVector;

/// Draws in the pilot batch that bounds `π / g`.
pub const PILOT_DRAWS: usize = 10_000;
/// Inflation applied to the pilot maximum of `π / g`.
pub const PILOT_INFLATION: f64 = 1.1;

/// A uniform draw on the open interval (0, 1), so that `u <= p` never fires
/// for `p = 0` and always fires for `p = 1`.
pub fn open_uniform(rng: &mut StreamRng) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// `π(θ) / g(θ)`, exactly 1 when `g` is the prior.
pub fn density_ratio(problem: &Problem, proposal: &dyn Proposal, theta: &ParamVector, attempt: u64) -> Result<f64> {
    if proposal.is_prior() {
        return Ok(1.0);
    }
    let g = proposal.density(theta);
    if !(g > 0.0) || !g.is_finite() {
        return Err(AbcError::ProposalSupport { attempt });
    }
    Ok(problem.prior_density(theta) / g)
}

/// An upper bound κ on `π / g`: exactly 1 for the prior, otherwise the
/// inflated maximum over a pilot batch drawn from `(PILOT, j)` streams.
pub fn ratio_bound(problem: &Problem, proposal: &dyn Proposal, seeds: SeedSource) -> Result<f64> {
    if proposal.is_prior() {
        return Ok(1.0);
    }
    let ratios = par_map_indexed(PILOT_DRAWS, |j| {
        let mut rng = seeds.stream(stages::PILOT, j as u64);
        let theta = proposal.sample(&mut rng);
        density_ratio(problem, proposal, &theta, j as u64)
    })?;
    let max = ratios.into_iter().fold(0.0, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return Err(AbcError::Config("proposal never lands where the prior has mass".into()));
    }
    Ok(max * PILOT_INFLATION)
}

/// Report a Bernoulli probability outside `[0, 1]` as a bound violation.
pub fn checked_probability(p: f64, attempt: u64, gate: bool) -> Result<f64> {
    if p > 1.0 {
        return Err(if gate {
            AbcError::GateBoundViolation { attempt, probability: p }
        } else {
            AbcError::BoundTooSmall { attempt, probability: p }
        });
    }
    Ok(p)
}
