//! ABC rejection sampling, with a fixed tolerance or with the tolerance chosen
//! after the fact from a fixed simulation budget.
//!
//! Attempt `j` draws `θ ~ g`, one summary and the uniform for its Bernoulli
//! test, in that order, from stream `(ATTEMPTS, j)`. The accepted set is the
//! first `N` successes in attempt order.

use std::ops::ControlFlow;
use std::time::Instant;

use crate::diagnostics::RunStatistics;
use crate::error::{AbcError, Result};
use crate::exec::scan_in_order;
use crate::kernel::{KernelFamily, SmoothingKernel};
use crate::model::{Problem, Proposal};
use crate::rng::{stages, SeedSource};
use crate::sampling::{checked_probability, density_ratio, open_uniform, ratio_bound};
use crate::types::{ParamVector, SummaryVector};

pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionConfig {
    pub n: usize,
    pub kernel: SmoothingKernel,
    /// The normalising bound `M >= K_h(0) · sup π/g`. Estimated from a pilot
    /// batch when absent (exact for the prior proposal).
    pub bound: Option<f64>,
    pub max_attempts: u64,
}

impl RejectionConfig {
    pub fn new(n: usize, kernel: SmoothingKernel) -> Self {
        Self { n, kernel, bound: None, max_attempts: DEFAULT_MAX_ATTEMPTS }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(AbcError::Config("N must be at least 1".into()));
        }
        if self.kernel.is_infinite() {
            return Err(AbcError::Config("rejection sampling needs a finite tolerance".into()));
        }
        if let Some(m) = self.bound {
            if !(m > 0.0) {
                return Err(AbcError::Config(format!("bound M must be positive, got {m}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionOutput {
    pub samples: Vec<ParamVector>,
    pub summaries: Vec<SummaryVector>,
    pub distances: Vec<f64>,
    /// Index of the attempt that produced each sample.
    pub attempt_index: Vec<u64>,
    pub stats: RunStatistics,
}

#[derive(Debug, Clone)]
struct Attempt {
    theta: ParamVector,
    summary: SummaryVector,
    distance: f64,
    ratio: f64,
    u: f64,
}

fn attempt(problem: &Problem, proposal: &dyn Proposal, seeds: SeedSource, j: u64) -> Result<Attempt> {
    let mut rng = seeds.stream(stages::ATTEMPTS, j);
    let theta = proposal.sample(&mut rng);
    let ratio = density_ratio(problem, proposal, &theta, j)?;
    let summary = problem.simulate(&theta, &mut rng)?;
    let distance = problem.distance(&summary)?;
    let u = open_uniform(&mut rng);
    Ok(Attempt { theta, summary, distance, ratio, u })
}

fn accepts(kernel: &SmoothingKernel, a: &Attempt, kappa: f64, j: u64) -> Result<bool> {
    let p = checked_probability(kernel.relative(a.distance) * (a.ratio / kappa), j, false)?;
    Ok(a.u <= p)
}

/// The bound κ on `π / g` implied by a configured `M`, or estimated.
fn kappa_for(problem: &Problem, proposal: &dyn Proposal, kernel: &SmoothingKernel, bound: Option<f64>, seeds: SeedSource) -> Result<f64> {
    match bound {
        Some(m) => Ok(m / kernel.at_zero()?),
        None => ratio_bound(problem, proposal, seeds),
    }
}

/// Draw `N` samples from `π_ABC(θ | s_obs)` by rejection.
pub fn rejection_sample(
    problem: &Problem,
    proposal: &dyn Proposal,
    cfg: &RejectionConfig,
    seed: u64,
) -> Result<RejectionOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let seeds = SeedSource::new(seed);
    let kappa = kappa_for(problem, proposal, &cfg.kernel, cfg.bound, seeds)?;
    let mut out = RejectionOutput {
        samples: Vec::with_capacity(cfg.n),
        summaries: Vec::with_capacity(cfg.n),
        distances: Vec::with_capacity(cfg.n),
        attempt_index: Vec::with_capacity(cfg.n),
        stats: RunStatistics::default(),
    };
    let consumed = scan_in_order(
        cfg.max_attempts,
        |j| attempt(problem, proposal, seeds, j),
        |j, a| {
            let a = a?;
            if accepts(&cfg.kernel, &a, kappa, j)? {
                out.samples.push(a.theta);
                out.summaries.push(a.summary);
                out.distances.push(a.distance);
                out.attempt_index.push(j);
            }
            Ok(if out.samples.len() == cfg.n { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
        },
    )?;
    if out.samples.len() < cfg.n {
        return Err(AbcError::BudgetExhausted { attempts: consumed, accepted: out.samples.len(), target: cfg.n });
    }
    out.stats = RunStatistics {
        simulator_calls: consumed,
        acceptance_rate: cfg.n as f64 / consumed as f64,
        wall_time: start.elapsed().as_secs_f64(),
        ess_final: cfg.n as f64,
    };
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoHConfig {
    pub n: usize,
    /// Total simulations N′.
    pub budget: u64,
    pub family: KernelFamily,
    /// The bound κ on `π / g`; estimated from a pilot batch when absent.
    pub ratio_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoHOutput {
    pub samples: RejectionOutput,
    pub h: f64,
    /// Draws also acceptable at `h` but dropped to keep exactly `N`.
    pub ties: usize,
}

/// Spend exactly `budget` simulations and keep the `N` draws accepted under
/// the smallest tolerance that accepts `N` of them.
///
/// Each attempt becomes acceptable once `h` reaches the scale at which its
/// Bernoulli test passes, so the tolerance is the `N`-th smallest such scale.
/// The output equals [`rejection_sample`] run at the returned `h` with the
/// same seed and `M = K_h(0) · κ`.
pub fn rejection_sample_auto_h(
    problem: &Problem,
    proposal: &dyn Proposal,
    cfg: &AutoHConfig,
    seed: u64,
) -> Result<AutoHOutput> {
    if cfg.n == 0 {
        return Err(AbcError::Config("N must be at least 1".into()));
    }
    if cfg.budget < cfg.n as u64 {
        return Err(AbcError::Config(format!("budget {} is smaller than N = {}", cfg.budget, cfg.n)));
    }
    if !cfg.family.compact_support() {
        return Err(AbcError::Config("automatic tolerance needs a compact-support kernel".into()));
    }
    let start = Instant::now();
    let seeds = SeedSource::new(seed);
    let kappa = match cfg.ratio_bound {
        Some(k) => k,
        None => ratio_bound(problem, proposal, seeds)?,
    };
    let mut attempts = Vec::with_capacity(cfg.budget.min(1 << 24) as usize);
    scan_in_order(cfg.budget, |j| attempt(problem, proposal, seeds, j), |j, a| {
        let a = a?;
        checked_probability(a.ratio / kappa, j, false)?;
        attempts.push(a);
        Ok(ControlFlow::Continue(()))
    })?;
    let mut thresholds: Vec<f64> = attempts
        .iter()
        .map(|a| cfg.family.threshold_scale(a.distance, a.u * kappa / a.ratio))
        .collect();
    let (_, nth, _) = thresholds.select_nth_unstable_by(cfg.n - 1, f64::total_cmp);
    let mut h = *nth;
    if !h.is_finite() {
        return Err(AbcError::BudgetExhausted { attempts: cfg.budget, accepted: 0, target: cfg.n });
    }
    h = h.max(f64::MIN_POSITIVE);
    // Settle rounding so the fixed-tolerance test agrees with the threshold.
    let count_at = |h: f64| -> Result<Vec<usize>> {
        let kernel = SmoothingKernel::new(cfg.family, h)?;
        let mut hits = Vec::new();
        for (j, a) in attempts.iter().enumerate() {
            if accepts(&kernel, a, kappa, j as u64)? {
                hits.push(j);
            }
        }
        Ok(hits)
    };
    let mut hits = count_at(h)?;
    let mut nudges = 0;
    while hits.len() < cfg.n {
        if nudges == 64 {
            return Err(AbcError::InvalidInput("tolerance search failed to settle".into()));
        }
        h = h.next_up();
        hits = count_at(h)?;
        nudges += 1;
    }
    let ties = hits.len() - cfg.n;
    let mut samples = RejectionOutput {
        samples: Vec::with_capacity(cfg.n),
        summaries: Vec::with_capacity(cfg.n),
        distances: Vec::with_capacity(cfg.n),
        attempt_index: Vec::with_capacity(cfg.n),
        stats: RunStatistics {
            simulator_calls: cfg.budget,
            acceptance_rate: cfg.n as f64 / cfg.budget as f64,
            wall_time: 0.0,
            ess_final: cfg.n as f64,
        },
    };
    for &j in hits.iter().take(cfg.n) {
        let a = &attempts[j];
        samples.samples.push(a.theta.clone());
        samples.summaries.push(a.summary.clone());
        samples.distances.push(a.distance);
        samples.attempt_index.push(j as u64);
    }
    samples.stats.wall_time = start.elapsed().as_secs_f64();
    Ok(AutoHOutput { samples, h, ties })
}
