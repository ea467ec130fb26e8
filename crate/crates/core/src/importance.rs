//! ABC importance sampling and its rejection-based variants.
//!
//! The plain, hybrid, early-rejection and k-NN samplers draw attempt `j`
//! from stream `(ATTEMPTS, j)`: `θ ~ g`, then the `T` summaries, then the
//! uniform for any Bernoulli test. Rejection control keeps one stream per
//! output particle, `(PARTICLES, i)`, because its retries are per particle.

use std::ops::ControlFlow;
use std::time::Instant;

use crate::diagnostics::{weighted_quantile_values, RunStatistics};
use crate::error::{AbcError, Result};
use crate::exec::{par_map_indexed, scan_in_order};
use crate::kernel::{KernelFamily, SmoothingKernel};
use crate::model::{Problem, Proposal};
use crate::rng::{stages, SeedSource, StreamRng};
use crate::sampling::{checked_probability, density_ratio, open_uniform, ratio_bound};
use crate::types::{ParamVector, ParticlePopulation, SummaryVector, WeightedParticle};
use crate::weights::ess_from_raw;

pub const DEFAULT_MAX_ATTEMPTS_PER_PARTICLE: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceConfig {
    pub n: usize,
    pub kernel: SmoothingKernel,
    /// Summary replicates per particle.
    pub t: usize,
    /// Test `π/(κ g)` before simulating (hybrid sampler only).
    pub early_rejection: bool,
    pub max_attempts_per_particle: u64,
    /// The bound κ on `π / g` for early rejection; estimated when absent.
    pub ratio_bound: Option<f64>,
}

impl ImportanceConfig {
    pub fn new(n: usize, kernel: SmoothingKernel) -> Self {
        Self {
            n,
            kernel,
            t: 1,
            early_rejection: false,
            max_attempts_per_particle: DEFAULT_MAX_ATTEMPTS_PER_PARTICLE,
            ratio_bound: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t == 0 {
            return Err(AbcError::Config("N and T must be at least 1".into()));
        }
        if self.kernel.is_infinite() {
            return Err(AbcError::Config("importance sampling needs a finite tolerance".into()));
        }
        if self.max_attempts_per_particle == 0 {
            return Err(AbcError::Config("max_attempts_per_particle must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceOutput {
    pub population: ParticlePopulation,
    pub stats: RunStatistics,
}

fn finish(particles: Vec<WeightedParticle>, h: f64, calls: u64, attempts: u64, start: Instant) -> ImportanceOutput {
    let population = ParticlePopulation::new(particles, h);
    let ess = ess_from_raw(&population.raw_weights()).unwrap_or(0.0);
    let stats = RunStatistics {
        simulator_calls: calls,
        acceptance_rate: population.len() as f64 / attempts.max(1) as f64,
        wall_time: start.elapsed().as_secs_f64(),
        ess_final: ess,
    };
    ImportanceOutput { population, stats }
}

struct Draw {
    theta: ParamVector,
    ratio: f64,
    summaries: Vec<SummaryVector>,
    distances: Vec<f64>,
}

impl Draw {
    fn new(problem: &Problem, proposal: &dyn Proposal, t: usize, rng: &mut StreamRng, attempt: u64) -> Result<Self> {
        let theta = proposal.sample(rng);
        let ratio = density_ratio(problem, proposal, &theta, attempt)?;
        let (summaries, distances) = problem.simulate_replicates(&theta, t, rng)?;
        Ok(Self { theta, ratio, summaries, distances })
    }

    /// `(1/T) Σₜ K_h(dₜ)`.
    fn mass(&self, kernel: &SmoothingKernel) -> f64 {
        self.distances.iter().map(|&d| kernel.eval_unchecked(d)).sum::<f64>() / self.distances.len() as f64
    }

    /// `(1/T) Σₜ K_h(dₜ) / K_h(0)`.
    fn relative_mass(&self, kernel: &SmoothingKernel) -> f64 {
        self.distances.iter().map(|&d| kernel.relative(d)).sum::<f64>() / self.distances.len() as f64
    }
}

/// Plain importance sampling: `w̃ = (1/T) Σₜ K_h(‖s(t) − s_obs‖) π(θ) / g(θ)`.
/// Zero weights are kept.
pub fn importance_sample(
    problem: &Problem,
    proposal: &dyn Proposal,
    cfg: &ImportanceConfig,
    seed: u64,
) -> Result<ImportanceOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let seeds = SeedSource::new(seed);
    let particles = par_map_indexed(cfg.n, |i| {
        let mut rng = seeds.stream(stages::ATTEMPTS, i as u64);
        let d = Draw::new(problem, proposal, cfg.t, &mut rng, i as u64)?;
        let w = d.mass(&cfg.kernel) * d.ratio;
        Ok(WeightedParticle::new(d.theta, d.summaries, w))
    })?;
    let calls = (cfg.n * cfg.t) as u64;
    Ok(finish(particles, cfg.kernel.scale(), calls, cfg.n as u64, start))
}

/// Importance/rejection hybrid: keep a draw with probability
/// `(1/T) Σₜ K_h(dₜ) / K_h(0)` and weight it by `π / g`.
///
/// Dispatches to [`early_rejection_importance_sample`] when
/// `cfg.early_rejection` is set.
pub fn importance_rejection_sample(
    problem: &Problem,
    proposal: &dyn Proposal,
    cfg: &ImportanceConfig,
    seed: u64,
) -> Result<ImportanceOutput> {
    if cfg.early_rejection {
        return early_rejection_importance_sample(problem, proposal, cfg, seed);
    }
    cfg.validate()?;
    let start = Instant::now();
    let seeds = SeedSource::new(seed);
    let limit = cfg.max_attempts_per_particle.saturating_mul(cfg.n as u64);
    let mut particles = Vec::with_capacity(cfg.n);
    let mut last_success = 0u64;
    let consumed = scan_in_order(
        limit,
        |j| -> Result<(Draw, f64)> {
            let mut rng = seeds.stream(stages::ATTEMPTS, j);
            let d = Draw::new(problem, proposal, cfg.t, &mut rng, j)?;
            Ok((d, open_uniform(&mut rng)))
        },
        |j, item| {
            let (d, u) = item?;
            if u <= d.relative_mass(&cfg.kernel) {
                particles.push(WeightedParticle::new(d.theta, d.summaries, d.ratio));
                last_success = j + 1;
                if particles.len() == cfg.n {
                    return Ok(ControlFlow::Break(()));
                }
            } else if j + 1 - last_success >= cfg.max_attempts_per_particle {
                return Err(AbcError::ParticleBudgetExhausted { particle: particles.len(), attempts: j + 1 - last_success });
            }
            Ok(ControlFlow::Continue(()))
        },
    )?;
    if particles.len() < cfg.n {
        return Err(AbcError::ParticleBudgetExhausted { particle: particles.len(), attempts: consumed - last_success });
    }
    Ok(finish(particles, cfg.kernel.scale(), consumed * cfg.t as u64, consumed, start))
}

/// The hybrid sampler with its two acceptance factors swapped: a draw passes
/// a gate with probability `π / (κ g)` before anything is simulated, and the
/// survivor is weighted by `(1/T) Σₜ K_h(dₜ) / K_h(0)`, which may be zero.
pub fn early_rejection_importance_sample(
    problem: &Problem,
    proposal: &dyn Proposal,
    cfg: &ImportanceConfig,
    seed: u64,
) -> Result<ImportanceOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let seeds = SeedSource::new(seed);
    let kappa = match cfg.ratio_bound {
        Some(k) if k > 0.0 => k,
        Some(k) => return Err(AbcError::Config(format!("ratio bound must be positive, got {k}"))),
        None => ratio_bound(problem, proposal, seeds)?,
    };
    let limit = cfg.max_attempts_per_particle.saturating_mul(cfg.n as u64);
    let mut particles = Vec::with_capacity(cfg.n);
    let mut last_success = 0u64;
    let consumed = scan_in_order(
        limit,
        |j| -> Result<Option<WeightedParticle>> {
            let mut rng = seeds.stream(stages::ATTEMPTS, j);
            let theta = proposal.sample(&mut rng);
            let ratio = density_ratio(problem, proposal, &theta, j)?;
            let gate = checked_probability(ratio / kappa, j, true)?;
            if open_uniform(&mut rng) > gate {
                return Ok(None);
            }
            let (summaries, distances) = problem.simulate_replicates(&theta, cfg.t, &mut rng)?;
            let w = distances.iter().map(|&d| cfg.kernel.relative(d)).sum::<f64>() / cfg.t as f64;
            Ok(Some(WeightedParticle::new(theta, summaries, w)))
        },
        |j, item| {
            match item? {
                Some(p) => {
                    particles.push(p);
                    last_success = j + 1;
                    if particles.len() == cfg.n {
                        return Ok(ControlFlow::Break(()));
                    }
                }
                None if j + 1 - last_success >= cfg.max_attempts_per_particle => {
                    return Err(AbcError::ParticleBudgetExhausted { particle: particles.len(), attempts: j + 1 - last_success });
                }
                None => {}
            }
            Ok(ControlFlow::Continue(()))
        },
    )?;
    if particles.len() < cfg.n {
        return Err(AbcError::ParticleBudgetExhausted { particle: particles.len(), attempts: consumed - last_success });
    }
    Ok(finish(particles, cfg.kernel.scale(), (cfg.n * cfg.t) as u64, consumed, start))
}

/// How the rejection-control threshold is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    Fixed(f64),
    /// The quantile of the first-pass weights at this level.
    Quantile(f64),
}

impl ThresholdRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdRule::Fixed(c) if !(c > 0.0 && c.is_finite()) => {
                Err(AbcError::Config(format!("rejection-control threshold c must be > 0, got {c}")))
            }
            ThresholdRule::Quantile(p) if !(p > 0.0 && p < 1.0) => {
                Err(AbcError::Config(format!("threshold quantile must lie in (0,1), got {p}")))
            }
            _ => Ok(()),
        }
    }
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Quantile(0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionControlConfig {
    pub base: ImportanceConfig,
    pub threshold: ThresholdRule,
}

/// `(r, w̃*)` for weight `w` at threshold `c`: `r = min{1, w/c}` and
/// `w̃* = w / r`, with `0/0 := 1` so that `c = 0` accepts everything.
pub fn rejection_control_weight(w: f64, c: f64) -> (f64, f64) {
    if c <= 0.0 || w >= c {
        return (1.0, w);
    }
    let r = w / c;
    // w / r, written so that it is exactly c.
    (r, if r > 0.0 { c } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionControlOutput {
    pub population: ParticlePopulation,
    /// `(1/N_attempted) Σ min{1, w̃/c}` over every attempt.
    pub m_hat: f64,
    pub threshold: f64,
    pub attempts: u64,
    pub stats: RunStatistics,
}

impl RejectionControlOutput {
    /// `M̂ · w̃*`, the weights on the scale of the plain importance weights.
    pub fn scaled_weights(&self) -> Vec<f64> {
        self.population.particles.iter().map(|p| self.m_hat * p.raw_weight).collect()
    }
}

/// Per-particle rejection-control bookkeeping.
pub(crate) struct RcParticle {
    pub particle: WeightedParticle,
    pub attempts: u64,
    pub r_sum: f64,
}

/// Run rejection control for one particle from a pending first draw.
/// `draw` makes attempts, `weigh` maps a draw to its weight.
pub(crate) fn rc_resume<D>(
    mut pending: (D, f64),
    c: f64,
    max_attempts: u64,
    particle: usize,
    rng: &mut StreamRng,
    mut draw: impl FnMut(&mut StreamRng, u64) -> Result<(D, f64)>,
    into_particle: impl FnOnce(D, f64) -> WeightedParticle,
) -> Result<RcParticle> {
    let mut attempts = 1u64;
    let mut r_sum = 0.0;
    loop {
        let (r, modified) = rejection_control_weight(pending.1, c);
        r_sum += r;
        if open_uniform(rng) <= r {
            return Ok(RcParticle { particle: into_particle(pending.0, modified), attempts, r_sum });
        }
        if attempts >= max_attempts {
            return Err(AbcError::ParticleBudgetExhausted { particle, attempts });
        }
        pending = draw(rng, attempts)?;
        attempts += 1;
    }
}

/// Pick the threshold for the first-pass weights.
pub(crate) fn choose_threshold(rule: ThresholdRule, first_pass: &[f64]) -> Result<f64> {
    match rule {
        ThresholdRule::Fixed(c) => Ok(c),
        ThresholdRule::Quantile(p) => {
            if first_pass.iter().all(|w| *w == 0.0) {
                return Ok(0.0);
            }
            weighted_quantile_values(first_pass, &vec![1.0; first_pass.len()], p)
        }
    }
}

/// Rejection-control importance sampling. Each particle retries on its own
/// stream until it passes the `min{1, w̃/c}` test, and carries `w̃* = w̃/r`.
///
/// With a quantile rule every particle first makes one draw, the threshold is
/// set from those weights, and the particles then resume their tests.
pub fn rejection_control_sample(
    problem: &Problem,
    proposal: &dyn Proposal,
    cfg: &RejectionControlConfig,
    seed: u64,
) -> Result<RejectionControlOutput> {
    cfg.base.validate()?;
    cfg.threshold.validate()?;
    let start = Instant::now();
    let seeds = SeedSource::new(seed);
    let base = &cfg.base;
    let draw = |rng: &mut StreamRng, i: usize, k: u64| -> Result<(Draw, f64)> {
        let d = Draw::new(problem, proposal, base.t, rng, (i as u64) << 32 | k)?;
        let w = d.mass(&base.kernel) * d.ratio;
        Ok((d, w))
    };
    let first: Vec<(StreamRng, (Draw, f64))> = par_map_indexed(base.n, |i| {
        let mut rng = seeds.stream(stages::PARTICLES, i as u64);
        let first = draw(&mut rng, i, 0)?;
        Ok((rng, first))
    })?;
    let first_weights: Vec<f64> = first.iter().map(|(_, (_, w))| *w).collect();
    let c = choose_threshold(cfg.threshold, &first_weights)?;
    let slots: Vec<std::sync::Mutex<Option<(StreamRng, (Draw, f64))>>> =
        first.into_iter().map(|x| std::sync::Mutex::new(Some(x))).collect();
    let done = par_map_indexed(base.n, |i| {
        let (mut rng, pending) = slots[i].lock().expect("unpoisoned").take().expect("taken once");
        rc_resume(
            pending,
            c,
            base.max_attempts_per_particle,
            i,
            &mut rng,
            |rng, k| draw(rng, i, k),
            |d, w| WeightedParticle::new(d.theta, d.summaries, w),
        )
    })?;
    let attempts: u64 = done.iter().map(|p| p.attempts).sum();
    let r_sum: f64 = done.iter().map(|p| p.r_sum).sum();
    let particles = done.into_iter().map(|p| p.particle).collect();
    let out = finish(particles, base.kernel.scale(), attempts * base.t as u64, attempts, start);
    Ok(RejectionControlOutput {
        population: out.population,
        m_hat: r_sum / attempts as f64,
        threshold: c,
        attempts,
        stats: out.stats,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnConfig {
    pub n: usize,
    /// Total simulations N′.
    pub budget: u64,
    pub family: KernelFamily,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnOutput {
    pub population: ParticlePopulation,
    pub h: f64,
    /// Attempt index of each particle, increasing.
    pub attempt_index: Vec<u64>,
    pub stats: RunStatistics,
}

/// k-nearest-neighbour importance sampling: simulate `N′` draws, keep the
/// `N` whose summaries are nearest `s_obs`, and weight them under
/// `h = d₍N₎`, the `N`-th smallest distance. The kernel's closed support
/// keeps every weight positive. Ties at `d₍N₎` keep the earliest attempts.
///
/// Attempts use the same streams as [`importance_rejection_sample`] with
/// `T = 1`, and particles are returned in attempt order.
pub fn knn_importance_sample(
    problem: &Problem,
    proposal: &dyn Proposal,
    cfg: &KnnConfig,
    seed: u64,
) -> Result<KnnOutput> {
    if cfg.n == 0 {
        return Err(AbcError::Config("N must be at least 1".into()));
    }
    if cfg.budget < cfg.n as u64 {
        return Err(AbcError::Config(format!("budget {} is smaller than N = {}", cfg.budget, cfg.n)));
    }
    if !cfg.family.compact_support() {
        return Err(AbcError::Config("k-NN importance sampling needs a compact-support kernel".into()));
    }
    let start = Instant::now();
    let seeds = SeedSource::new(seed);
    let mut draws = Vec::with_capacity(cfg.budget.min(1 << 24) as usize);
    scan_in_order(
        cfg.budget,
        |j| {
            let mut rng = seeds.stream(stages::ATTEMPTS, j);
            Draw::new(problem, proposal, 1, &mut rng, j)
        },
        |_, d| {
            draws.push(d?);
            Ok(ControlFlow::Continue(()))
        },
    )?;
    let mut order: Vec<usize> = (0..draws.len()).collect();
    order.sort_by(|&a, &b| draws[a].distances[0].total_cmp(&draws[b].distances[0]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order[..cfg.n].to_vec();
    keep.sort_unstable();
    let h = draws[order[cfg.n - 1]].distances[0].max(f64::MIN_POSITIVE);
    let kernel = SmoothingKernel::new(cfg.family, h)?;
    let mut particles = Vec::with_capacity(cfg.n);
    let mut index = Vec::with_capacity(cfg.n);
    let mut by_index: Vec<Option<Draw>> = draws.into_iter().map(Some).collect();
    for j in keep {
        let d = by_index[j].take().expect("kept once");
        let w = d.mass(&kernel) * d.ratio;
        particles.push(WeightedParticle::new(d.theta, d.summaries, w));
        index.push(j as u64);
    }
    let out = finish(particles, h, cfg.budget, cfg.budget, start);
    Ok(KnnOutput { population: out.population, h, attempt_index: index, stats: out.stats })
}

/// `π(θ) (1/T) Σₜ K_h(‖s(t) − s_obs‖)` with `s(t) ~ p(s | θ)`, an unbiased
/// estimate of the ABC posterior density at θ up to its normalising constant.
pub fn marginal_posterior_estimate(
    problem: &Problem,
    theta: &ParamVector,
    kernel: &SmoothingKernel,
    t: usize,
    rng: &mut StreamRng,
) -> Result<f64> {
    if t == 0 {
        return Err(AbcError::Config("T must be at least 1".into()));
    }
    let prior = problem.prior_density(theta);
    if prior == 0.0 {
        return Ok(0.0);
    }
    let (_, distances) = problem.simulate_replicates(theta, t, rng)?;
    let mut total = 0.0;
    for d in distances {
        total += kernel.eval(d)?;
    }
    Ok(prior * total / t as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::DistanceMetric;
    use crate::model::{NormalProposal, PriorProposal};
    use crate::models::NormalMeanModel;
    use std::sync::Arc;

    fn problem() -> Problem {
        Problem::from_model(Arc::new(NormalMeanModel::default()), DistanceMetric::Euclidean).unwrap()
    }

    #[test]
    fn rejection_control_documented() {
        assert_eq!(rejection_control_weight(2.0, 1.0), (1.0, 2.0));
        assert_eq!(rejection_control_weight(0.5, 1.0), (0.5, 1.0));
        assert_eq!(rejection_control_weight(0.0, 0.0), (1.0, 0.0));
        assert_eq!(rejection_control_weight(0.0, 1.0), (0.0, 0.0));
    }

    #[test]
    fn rejection_control_identity() {
        let p = problem();
        let g = NormalProposal::diagonal(vec![1.0], &[2.0]).unwrap();
        let kernel = SmoothingKernel::new(KernelFamily::Gaussian, 0.3).unwrap();
        let cfg = RejectionControlConfig { base: ImportanceConfig::new(500, kernel), threshold: ThresholdRule::Fixed(0.05) };
        let out = rejection_control_sample(&p, &g, &cfg, 9).unwrap();
        for particle in &out.population.particles {
            assert!(particle.raw_weight >= 0.05);
        }
        assert!(out.m_hat > 0.0 && out.m_hat <= 1.0);
        assert!(out.attempts >= 500);
        let tiny = RejectionControlConfig { threshold: ThresholdRule::Fixed(1e-300), ..cfg.clone() };
        let out = rejection_control_sample(&p, &g, &tiny, 9).unwrap();
        assert_eq!(out.m_hat, 1.0);
        assert_eq!(out.attempts, 500);
        let bad = RejectionControlConfig { threshold: ThresholdRule::Fixed(0.0), ..cfg };
        assert!(matches!(rejection_control_sample(&p, &g, &bad, 9), Err(AbcError::Config(_))));
    }

    #[test]
    fn hybrid_uniform_prior_has_full_ess() {
        let p = problem();
        let prior = PriorProposal::new(p.model_arc());
        let kernel = SmoothingKernel::new(KernelFamily::Uniform, 0.3).unwrap();
        let out = importance_rejection_sample(&p, &prior, &ImportanceConfig::new(300, kernel), 5).unwrap();
        assert!(out.population.particles.iter().all(|q| q.raw_weight == 1.0));
        assert_eq!(out.population.ess().unwrap(), 300.0);
    }

    #[test]
    fn plain_importance_keeps_zero_weights() {
        let p = problem();
        let prior = PriorProposal::new(p.model_arc());
        let kernel = SmoothingKernel::new(KernelFamily::Uniform, 1e-9).unwrap();
        let mut out = importance_sample(&p, &prior, &ImportanceConfig::new(100, kernel), 5).unwrap();
        assert_eq!(out.population.len(), 100);
        assert!(matches!(out.population.normalise(), Err(AbcError::DegeneratePopulation { .. })));
    }

    #[test]
    fn knn_full_budget_keeps_all() {
        let p = problem();
        let prior = PriorProposal::new(p.model_arc());
        let out = knn_importance_sample(&p, &prior, &KnnConfig { n: 40, budget: 40, family: KernelFamily::Uniform }, 6).unwrap();
        assert_eq!(out.population.len(), 40);
        assert_eq!(out.attempt_index, (0..40).collect::<Vec<u64>>());
        let max = out.population.particles.iter().map(|q| p.distance(&q.summaries[0]).unwrap()).fold(0.0, f64::max);
        assert_eq!(out.h, max);
        assert!(out.population.particles.iter().all(|q| q.raw_weight > 0.0));
    }

    #[test]
    fn marginal_estimate_zero_prior() {
        struct Bounded;
        impl crate::model::GenerativeModel for Bounded {
            fn name(&self) -> &str { "bounded" }
            fn param_dim(&self) -> usize { 1 }
            fn summary_dim(&self) -> usize { 1 }
            fn sample_prior(&self, _: &mut StreamRng) -> ParamVector { ParamVector::scalar(0.5) }
            fn prior_density(&self, t: &ParamVector) -> f64 { if (0.0..=1.0).contains(&t[0]) { 1.0 } else { 0.0 } }
            fn simulate_summary(&self, t: &ParamVector, _: &mut StreamRng) -> Result<SummaryVector> { Ok(SummaryVector::scalar(t[0])) }
        }
        let p = Problem::new(Arc::new(Bounded), SummaryVector::scalar(0.5), DistanceMetric::Euclidean).unwrap();
        let kernel = SmoothingKernel::new(KernelFamily::Gaussian, 1.0).unwrap();
        let mut rng = SeedSource::new(1).stream(0, 0);
        assert_eq!(marginal_posterior_estimate(&p, &ParamVector::scalar(2.0), &kernel, 4, &mut rng).unwrap(), 0.0);
        assert_eq!(p.total_simulator_calls(), 0);
    }
}
