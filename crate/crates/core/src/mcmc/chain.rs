use std::ops::ControlFlow;

use super::trace::{ChainRecord, ChainState, ChainTrace};
use crate::error::{AbcError, Result};
use crate::exec::scan_in_order;
use crate::kernel::{KernelFamily, SmoothingKernel};
use crate::model::{Problem, ProposalKernel};
use crate::rng::{stages, SeedSource, StreamRng};
use crate::sampling::open_uniform;
use crate::types::{ParamVector, SummaryVector};
use crate::weights::log_kernel_mass;

pub const DEFAULT_INIT_MAX_TRIES: u64 = 1_000_000;
pub const DEFAULT_PER_ITER_SIM_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    pub kernel: SmoothingKernel,
    /// Iterations N; the trace holds N + 1 states.
    pub iterations: usize,
    /// Summary replicates per state.
    pub t: usize,
    pub init_max_tries: u64,
    /// Start here instead of searching the prior. Must have positive mass.
    pub initial: Option<ChainState>,
    pub store_summaries: bool,
}

impl McmcConfig {
    pub fn new(kernel: SmoothingKernel, iterations: usize) -> Self {
        Self { kernel, iterations, t: 1, init_max_tries: DEFAULT_INIT_MAX_TRIES, initial: None, store_summaries: false }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.kernel.is_infinite() {
            return Err(AbcError::Config("ABC-MCMC needs a finite tolerance".into()));
        }
        if self.t == 0 {
            return Err(AbcError::Config("T must be at least 1".into()));
        }
        Ok(())
    }
}

/// Log Metropolis–Hastings acceptance probability of an ABC move.
///
/// Only kernel masses, prior densities and proposal densities enter; the
/// intractable likelihood never does.
pub fn log_acceptance(
    log_mass_proposed: f64,
    log_mass_current: f64,
    log_prior_proposed: f64,
    log_prior_current: f64,
    log_q_reverse: f64,
    log_q_forward: f64,
) -> f64 {
    if log_mass_proposed == f64::NEG_INFINITY || log_prior_proposed == f64::NEG_INFINITY || log_q_reverse == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let r = (log_mass_proposed - log_mass_current) + (log_prior_proposed - log_prior_current) + (log_q_reverse - log_q_forward);
    r.min(0.0)
}

/// `ln π(θ′) − ln π(θ) + ln g(θ′, θ) − ln g(θ, θ′)`, the part of the ratio
/// that does not involve simulation.
pub(crate) fn log_prior_proposal_ratio(
    problem: &Problem,
    proposal: &dyn ProposalKernel,
    current: &ParamVector,
    proposed: &ParamVector,
) -> (f64, f64, f64, f64) {
    let lp_new = problem.prior_density(proposed).ln();
    let lp_cur = problem.prior_density(current).ln();
    let (rev, fwd) = if proposal.is_symmetric() {
        (0.0, 0.0)
    } else {
        (proposal.log_density(proposed, current), proposal.log_density(current, proposed))
    };
    (lp_new, lp_cur, rev, fwd)
}

/// Draw from the prior on `(INIT, k)` streams until some draw has positive
/// kernel mass. Returns the state and the number of tries.
pub(crate) fn initialise(
    problem: &Problem,
    kernel: &SmoothingKernel,
    t: usize,
    max_tries: u64,
    seeds: SeedSource,
) -> Result<(ChainState, u64)> {
    let mut found = None;
    let tries = scan_in_order(
        max_tries,
        |k| -> Result<(ParamVector, Vec<SummaryVector>, Vec<f64>)> {
            let mut rng = seeds.stream(stages::INIT, k);
            let theta = problem.model().sample_prior(&mut rng);
            let (s, d) = problem.simulate_replicates(&theta, t, &mut rng)?;
            Ok((theta, s, d))
        },
        |_, item| {
            let (theta, s, d) = item?;
            if log_kernel_mass(kernel, &d) > f64::NEG_INFINITY {
                found = Some(ChainState::new(theta, s, d, kernel));
                return Ok(ControlFlow::Break(()));
            }
            Ok(ControlFlow::Continue(()))
        },
    )?;
    found.map(|s| (s, tries)).ok_or(AbcError::Initialisation { tries })
}

pub(crate) fn start_state(problem: &Problem, cfg: &McmcConfig, seeds: SeedSource) -> Result<(ChainState, u64)> {
    match &cfg.initial {
        Some(state) => {
            let state = ChainState::new(state.theta.clone(), state.summaries.clone(), state.distances.clone(), &cfg.kernel);
            if state.log_mass == f64::NEG_INFINITY || state.distances.len() != cfg.t {
                return Err(AbcError::Config("initial state needs T replicates with positive kernel mass".into()));
            }
            Ok((state, 0))
        }
        None => {
            let (state, tries) = initialise(problem, &cfg.kernel, cfg.t, cfg.init_max_tries, seeds)?;
            Ok((state, tries * cfg.t as u64))
        }
    }
}

pub(crate) struct TraceBuilder {
    trace: ChainTrace,
    calls: u64,
}

impl TraceBuilder {
    pub(crate) fn new(state: &ChainState, init_calls: u64, iterations: usize, store: bool) -> Self {
        let mut trace = ChainTrace {
            states: Vec::with_capacity(iterations + 1),
            acceptance_count: 0,
            simulator_calls: init_calls,
            init_calls,
            summaries: store.then(|| Vec::with_capacity(iterations + 1)),
        };
        trace.states.push(ChainRecord {
            theta: state.theta.clone(),
            log_mass: state.log_mass,
            accepted: false,
            h: state.h_current,
            cumulative_calls: init_calls,
        });
        if let Some(s) = trace.summaries.as_mut() {
            s.push(state.summaries.clone());
        }
        Self { trace, calls: init_calls }
    }

    pub(crate) fn push(&mut self, state: &ChainState, accepted: bool, calls: u64) {
        self.calls += calls;
        if accepted {
            self.trace.acceptance_count += 1;
        }
        self.trace.states.push(ChainRecord {
            theta: state.theta.clone(),
            log_mass: state.log_mass,
            accepted,
            h: state.h_current,
            cumulative_calls: self.calls,
        });
        if let Some(s) = self.trace.summaries.as_mut() {
            s.push(state.summaries.clone());
        }
    }

    pub(crate) fn finish(mut self) -> ChainTrace {
        self.trace.simulator_calls = self.calls;
        self.trace
    }
}

fn chain_rng(seeds: SeedSource, i: usize) -> StreamRng {
    seeds.stream(stages::CHAIN, i as u64)
}

/// ABC-MCMC on the `T`-replicate target. `T = 1` is the standard sampler;
/// `T > 1` is the pseudo-marginal sampler with replicate-averaged kernel mass.
///
/// Iteration `i` draws `θ′`, then `T` summaries at `θ′`, then the uniform,
/// from stream `(CHAIN, i)`. Moves to zero prior density are rejected without
/// simulating.
pub fn abc_mcmc(problem: &Problem, proposal: &dyn ProposalKernel, cfg: &McmcConfig, seed: u64) -> Result<ChainTrace> {
    cfg.validate()?;
    let seeds = SeedSource::new(seed);
    let (mut state, init_calls) = start_state(problem, cfg, seeds)?;
    let mut out = TraceBuilder::new(&state, init_calls, cfg.iterations, cfg.store_summaries);
    for i in 1..=cfg.iterations {
        let mut rng = chain_rng(seeds, i);
        let proposed = proposal.sample(&state.theta, &mut rng);
        let (lp_new, lp_cur, rev, fwd) = log_prior_proposal_ratio(problem, proposal, &state.theta, &proposed);
        if lp_new == f64::NEG_INFINITY {
            out.push(&state, false, 0);
            continue;
        }
        let (s, d) = problem.simulate_replicates(&proposed, cfg.t, &mut rng)?;
        let lm_new = log_kernel_mass(&cfg.kernel, &d);
        let log_alpha = log_acceptance(lm_new, state.log_mass, lp_new, lp_cur, rev, fwd);
        let accept = open_uniform(&mut rng).ln() <= log_alpha;
        if accept {
            state = ChainState { theta: proposed, summaries: s, distances: d, log_mass: lm_new, h_current: state.h_current };
        }
        out.push(&state, accept, cfg.t as u64);
    }
    Ok(out.finish())
}

fn require_uniform(kernel: &SmoothingKernel) -> Result<()> {
    if kernel.family() != KernelFamily::Uniform {
        return Err(AbcError::Config(format!(
            "this transition kernel is defined for the uniform kernel, got {}",
            kernel.family()
        )));
    }
    Ok(())
}

/// Lee–Lee Method 2: each iteration simulates `T` replicates at `θ′` and
/// regenerates `T − 1` at the current state. The acceptance ratio compares
/// the proposal's hit count with one plus the regenerated hit count.
///
/// Draw order on `(CHAIN, i)`: `θ′`, the `T` proposal replicates, the
/// `T − 1` current replicates, the uniform.
pub fn abc_mcmc_method2(problem: &Problem, proposal: &dyn ProposalKernel, cfg: &McmcConfig, seed: u64) -> Result<ChainTrace> {
    cfg.validate()?;
    require_uniform(&cfg.kernel)?;
    let seeds = SeedSource::new(seed);
    let (mut state, init_calls) = start_state(problem, cfg, seeds)?;
    let h = cfg.kernel.scale();
    let mut out = TraceBuilder::new(&state, init_calls, cfg.iterations, cfg.store_summaries);
    for i in 1..=cfg.iterations {
        let mut rng = chain_rng(seeds, i);
        let proposed = proposal.sample(&state.theta, &mut rng);
        let (lp_new, lp_cur, rev, fwd) = log_prior_proposal_ratio(problem, proposal, &state.theta, &proposed);
        if lp_new == f64::NEG_INFINITY {
            out.push(&state, false, 0);
            continue;
        }
        let (s, d) = problem.simulate_replicates(&proposed, cfg.t, &mut rng)?;
        let hits_new = d.iter().filter(|&&x| x <= h).count();
        let (_, d_cur) = problem.simulate_replicates(&state.theta, cfg.t - 1, &mut rng)?;
        let hits_cur = 1 + d_cur.iter().filter(|&&x| x <= h).count();
        let log_alpha = log_acceptance((hits_new as f64).ln(), (hits_cur as f64).ln(), lp_new, lp_cur, rev, fwd);
        let accept = open_uniform(&mut rng).ln() <= log_alpha;
        if accept {
            state = ChainState::new(proposed, s, d, &cfg.kernel);
        }
        out.push(&state, accept, (2 * cfg.t - 1) as u64);
    }
    Ok(out.finish())
}

/// Lee–Lee Method 3: pre-test the move on the prior and proposal ratio
/// alone, then simulate at the current state and at `θ′` in turn until one
/// of them lands within `h`. The move is accepted when the proposal's
/// replicate hits, including when both hit at the same round.
///
/// `cfg.t` is ignored. Each iteration may simulate at most `per_iter_sim_cap`
/// times.
pub fn abc_mcmc_method3(
    problem: &Problem,
    proposal: &dyn ProposalKernel,
    cfg: &McmcConfig,
    per_iter_sim_cap: u64,
    seed: u64,
) -> Result<ChainTrace> {
    let cfg = McmcConfig { t: 1, ..cfg.clone() };
    cfg.validate()?;
    require_uniform(&cfg.kernel)?;
    if per_iter_sim_cap < 2 {
        return Err(AbcError::Config("per_iter_sim_cap must allow at least one round".into()));
    }
    let seeds = SeedSource::new(seed);
    let (mut state, init_calls) = start_state(problem, &cfg, seeds)?;
    let h = cfg.kernel.scale();
    let mut out = TraceBuilder::new(&state, init_calls, cfg.iterations, cfg.store_summaries);
    for i in 1..=cfg.iterations {
        let mut rng = chain_rng(seeds, i);
        let proposed = proposal.sample(&state.theta, &mut rng);
        let (lp_new, lp_cur, rev, fwd) = log_prior_proposal_ratio(problem, proposal, &state.theta, &proposed);
        let log_pre = log_acceptance(0.0, 0.0, lp_new, lp_cur, rev, fwd);
        if open_uniform(&mut rng).ln() > log_pre {
            out.push(&state, false, 0);
            continue;
        }
        let mut calls = 0u64;
        let accepted = loop {
            if calls + 2 > per_iter_sim_cap {
                return Err(AbcError::StuckIteration {
                    iteration: i,
                    calls,
                    theta: state.theta.to_vec(),
                    proposal: proposed.to_vec(),
                });
            }
            let s_cur = problem.simulate(&state.theta, &mut rng)?;
            let s_new = problem.simulate(&proposed, &mut rng)?;
            calls += 2;
            let d_cur = problem.distance(&s_cur)?;
            let d_new = problem.distance(&s_new)?;
            if d_new <= h {
                break Some((s_new, d_new));
            }
            if d_cur <= h {
                break None;
            }
        };
        let accept = accepted.is_some();
        if let Some((s, d)) = accepted {
            state = ChainState::new(proposed, vec![s], vec![d], &cfg.kernel);
        }
        out.push(&state, accept, calls);
    }
    Ok(out.finish())
}
