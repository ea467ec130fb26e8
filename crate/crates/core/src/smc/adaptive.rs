//! Adaptive ABC-SMC with an ESS-controlled tolerance schedule.
//!
//! Initial particle `i` uses `(SEQUENTIAL, i)`. Stage `m` resamples from
//! `(SEQUENTIAL + 2m + 1, 0)` and moves particle `i` on `(SEQUENTIAL + 2m, i)`.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::diagnostics::RunStatistics;
use crate::error::{AbcError, Result};
use crate::exec::par_map_indexed;
use crate::kernel::{KernelFamily, SmoothingKernel};
use crate::mcmc::log_acceptance;
use crate::model::{GaussianRandomWalk, Problem, Proposal, ProposalKernel};
use crate::rng::{stages, SeedSource};
use crate::sampling::{density_ratio, open_uniform};
use crate::smc::proposal::{scaled_population_covariance, COVARIANCE_SCALE};
use crate::smc::resample::{offspring_indices, ResamplingScheme};
use crate::smc::solve::{log_relative_mass, Reweighting, solve_next_h};
use crate::types::{ParamVector, ParticlePopulation, SummaryVector, WeightedParticle};
use crate::weights::ess_from_raw;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub min_move_rate: f64,
    pub min_h: f64,
    pub max_stages: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self { min_move_rate: 0.015, min_h: 0.0, max_stages: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MoveProposal {
    /// Gaussian random walk with this multiple of the weighted population
    /// covariance.
    ScaledCovariance(f64),
    Fixed(DMatrix<f64>),
}

impl Default for MoveProposal {
    fn default() -> Self {
        MoveProposal::ScaledCovariance(COVARIANCE_SCALE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcConfig {
    pub n: usize,
    pub family: KernelFamily,
    pub alpha: f64,
    /// Resample when the ESS falls below this; `N / 2` when absent.
    pub resample_threshold: Option<f64>,
    pub t: usize,
    pub stop: StopRule,
    pub scheme: ResamplingScheme,
    pub moves: MoveProposal,
    pub moves_per_stage: usize,
}

impl SmcConfig {
    pub fn new(n: usize, family: KernelFamily, alpha: f64) -> Self {
        Self {
            n,
            family,
            alpha,
            resample_threshold: None,
            t: 1,
            stop: StopRule::default(),
            scheme: ResamplingScheme::default(),
            moves: MoveProposal::default(),
            moves_per_stage: 1,
        }
    }

    pub fn resample_threshold(&self) -> f64 {
        self.resample_threshold.unwrap_or(self.n as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t == 0 {
            return Err(AbcError::Config("N and T must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AbcError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        let e = self.resample_threshold();
        if !(e >= 1.0 && e <= self.n as f64) {
            return Err(AbcError::Config(format!("resampling threshold {e} is outside [1, N]")));
        }
        if self.stop.min_move_rate.is_nan() || !(self.stop.min_h >= 0.0) || self.stop.max_stages == 0 {
            return Err(AbcError::Config("invalid stop rule".into()));
        }
        if self.moves_per_stage == 0 {
            return Err(AbcError::Config("moves_per_stage must be at least 1".into()));
        }
        if let MoveProposal::ScaledCovariance(s) = self.moves {
            if !(s > 0.0 && s.is_finite()) {
                return Err(AbcError::Config(format!("move covariance scale must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MoveRate,
    MinScale,
    MaxStages,
}

/// One row of the stage log.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    pub h: f64,
    /// After reweighting.
    pub ess_before: f64,
    /// After resampling, equal to `ess_before` when not resampled.
    pub ess_after: f64,
    pub resampled: bool,
    pub move_rate: f64,
    pub simulator_calls: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcOutput {
    pub population: ParticlePopulation,
    pub stages: Vec<StageRecord>,
    pub stop: StopReason,
    pub stats: RunStatistics,
}

#[derive(Debug, Clone)]
struct Particle {
    theta: ParamVector,
    summaries: Vec<SummaryVector>,
    distances: Vec<f64>,
    weight: f64,
}

struct Moved {
    particle: Particle,
    accepted: usize,
    tried: usize,
    calls: u64,
}

fn move_particle(
    problem: &Problem,
    walk: &GaussianRandomWalk,
    kernel: &SmoothingKernel,
    moves: usize,
    t: usize,
    mut p: Particle,
    rng: &mut crate::rng::StreamRng,
) -> Result<Moved> {
    let mut out = Moved { particle: p.clone(), accepted: 0, tried: 0, calls: 0 };
    if !(p.weight > 0.0) {
        return Ok(out);
    }
    let mut lm_cur = log_relative_mass(kernel, &p.distances);
    let mut lp_cur = problem.prior_density(&p.theta).ln();
    for _ in 0..moves {
        out.tried += 1;
        let theta = walk.sample(&p.theta, rng);
        let lp_new = problem.prior_density(&theta).ln();
        if lp_new == f64::NEG_INFINITY {
            continue;
        }
        let (summaries, distances) = problem.simulate_replicates(&theta, t, rng)?;
        out.calls += t as u64;
        let lm_new = log_relative_mass(kernel, &distances);
        let log_a = log_acceptance(lm_new, lm_cur, lp_new, lp_cur, 0.0, 0.0);
        if open_uniform(rng).ln() <= log_a {
            out.accepted += 1;
            p = Particle { theta, summaries, distances, weight: p.weight };
            lm_cur = lm_new;
            lp_cur = lp_new;
        }
    }
    out.particle = p;
    Ok(out)
}

fn to_population(particles: &[Particle], h: f64) -> Result<ParticlePopulation> {
    let mut pop = ParticlePopulation::new(
        particles
            .iter()
            .map(|p| WeightedParticle::new(p.theta.clone(), p.summaries.clone(), p.weight))
            .collect(),
        h,
    );
    pop.normalise()?;
    Ok(pop)
}

/// Result of [`move_population`].
#[derive(Debug, Clone, PartialEq)]
pub struct MoveOutcome {
    pub population: ParticlePopulation,
    pub accepted: usize,
    pub tried: usize,
    pub simulator_calls: u64,
}

/// Apply `moves_per_stage` MCMC moves targeting `π_ABC` at scale `h` to
/// every positively weighted particle, leaving weights unchanged. Particle
/// `i` draws from stream `(stream, i)`.
pub fn move_population(
    problem: &Problem,
    population: &ParticlePopulation,
    kernel: &SmoothingKernel,
    moves: &MoveProposal,
    moves_per_stage: usize,
    seed: u64,
    stream: u64,
) -> Result<MoveOutcome> {
    let particles = population
        .particles
        .iter()
        .map(|p| {
            let distances = p.summaries.iter().map(|s| problem.distance(s)).collect::<Result<Vec<_>>>()?;
            Ok(Particle { theta: p.theta.clone(), summaries: p.summaries.clone(), distances, weight: p.raw_weight })
        })
        .collect::<Result<Vec<_>>>()?;
    let t = particles.first().map_or(1, |p| p.summaries.len());
    let walk = move_walk(moves, &particles, kernel.scale())?;
    let moved = par_map_indexed(particles.len(), |i| {
        let mut rng = SeedSource::new(seed).stream(stream, i as u64);
        move_particle(problem, &walk, kernel, moves_per_stage, t, particles[i].clone(), &mut rng)
    })?;
    let accepted = moved.iter().map(|m| m.accepted).sum();
    let tried = moved.iter().map(|m| m.tried).sum();
    let simulator_calls = moved.iter().map(|m| m.calls).sum();
    let particles: Vec<Particle> = moved.into_iter().map(|m| m.particle).collect();
    Ok(MoveOutcome { population: to_population(&particles, kernel.scale())?, accepted, tried, simulator_calls })
}

fn move_walk(moves: &MoveProposal, particles: &[Particle], h: f64) -> Result<GaussianRandomWalk> {
    let cov = match moves {
        MoveProposal::ScaledCovariance(s) => scaled_population_covariance(&to_population(particles, h)?, *s)?,
        MoveProposal::Fixed(c) => c.clone(),
    };
    GaussianRandomWalk::new(cov)
}

/// Adaptive ABC-SMC. Particles start from `proposal` with weights `π / g`
/// and `T` replicates each. Every stage picks `h_m` so the ESS drops by the
/// factor α, resamples when the ESS falls below the threshold, and moves
/// each live particle with an MCMC step targeting `π_ABC` at `h_m`. The
/// run stops when the stop rule fires.
pub fn adaptive_smc(problem: &Problem, proposal: &dyn Proposal, cfg: &SmcConfig, seed: u64) -> Result<SmcOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let seeds = SeedSource::new(seed);
    let t = cfg.t;

    let mut particles = par_map_indexed(cfg.n, |i| {
        let mut rng = seeds.stream(stages::SEQUENTIAL, i as u64);
        let theta = proposal.sample(&mut rng);
        let weight = density_ratio(problem, proposal, &theta, i as u64)?;
        let (summaries, distances) = problem.simulate_replicates(&theta, t, &mut rng)?;
        Ok(Particle { theta, summaries, distances, weight })
    })?;
    let mut calls = (cfg.n * t) as u64;
    let mut moved_total = 0usize;
    let mut accepted_total = 0usize;
    let ess0 = ess_from_raw(&particles.iter().map(|p| p.weight).collect::<Vec<_>>())
        .map_err(|_| AbcError::DegeneratePopulation { n: cfg.n })?;
    let mut log = vec![StageRecord {
        stage: 0,
        h: f64::INFINITY,
        ess_before: ess0,
        ess_after: ess0,
        resampled: false,
        move_rate: 1.0,
        simulator_calls: calls,
    }];
    let mut h_prev = f64::INFINITY;

    let stop = loop {
        let m = log.len();
        let weights: Vec<f64> = particles.iter().map(|p| p.weight).collect();
        let distances: Vec<Vec<f64>> = particles.iter().map(|p| p.distances.clone()).collect();
        let solve = solve_next_h(&weights, &distances, cfg.family, cfg.alpha, h_prev)?;
        if solve.stalled {
            return Err(AbcError::ScheduleStall { stage: m, h: solve.h, achieved: solve.ess, target: solve.target });
        }
        let h = solve.h;
        let new_weights = Reweighting::new(&weights, &distances, cfg.family, h_prev)?.weights(h);
        for (p, w) in particles.iter_mut().zip(new_weights) {
            p.weight = w;
        }
        let raw: Vec<f64> = particles.iter().map(|p| p.weight).collect();
        let ess_before = ess_from_raw(&raw).map_err(|_| AbcError::DegeneratePopulation { n: cfg.n })?;

        let resampled = ess_before < cfg.resample_threshold();
        if resampled {
            let mut rng = seeds.stream(stages::SEQUENTIAL + 2 * m as u64 + 1, 0);
            let idx = offspring_indices(&raw, cfg.n, cfg.scheme, &mut rng)?;
            particles = idx
                .into_iter()
                .map(|i| Particle { weight: 1.0, ..particles[i].clone() })
                .collect();
        }
        let ess_after = if resampled {
            let ones: Vec<f64> = particles.iter().map(|p| p.weight).collect();
            ess_from_raw(&ones)?
        } else {
            ess_before
        };

        let walk = move_walk(&cfg.moves, &particles, h)?;
        let kernel = SmoothingKernel::new(cfg.family, h)?;
        let stream = stages::SEQUENTIAL + 2 * m as u64;
        let moved = par_map_indexed(cfg.n, |i| {
            let mut rng = seeds.stream(stream, i as u64);
            move_particle(problem, &walk, &kernel, cfg.moves_per_stage, t, particles[i].clone(), &mut rng)
        })?;
        let tried: usize = moved.iter().map(|m| m.tried).sum();
        let accepted: usize = moved.iter().map(|m| m.accepted).sum();
        calls += moved.iter().map(|m| m.calls).sum::<u64>();
        moved_total += tried;
        accepted_total += accepted;
        particles = moved.into_iter().map(|m| m.particle).collect();
        let move_rate = if tried > 0 { accepted as f64 / tried as f64 } else { 0.0 };
        log::debug!("stage {m}: h = {h:.6e}, ESS {ess_before:.1}, move rate {move_rate:.4}");
        log.push(StageRecord { stage: m, h, ess_before, ess_after, resampled, move_rate, simulator_calls: calls });
        h_prev = h;

        if move_rate < cfg.stop.min_move_rate {
            break StopReason::MoveRate;
        }
        if h < cfg.stop.min_h {
            break StopReason::MinScale;
        }
        if m >= cfg.stop.max_stages {
            break StopReason::MaxStages;
        }
    };

    let population = to_population(&particles, h_prev)?;
    let stats = RunStatistics {
        simulator_calls: calls,
        acceptance_rate: accepted_total as f64 / moved_total.max(1) as f64,
        wall_time: start.elapsed().as_secs_f64(),
        ess_final: population.ess()?,
    };
    Ok(SmcOutput { population, stages: log, stop, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::DistanceMetric;
    use crate::model::PriorProposal;
    use crate::models::NormalMeanModel;
    use std::sync::Arc;

    fn problem() -> Problem {
        Problem::from_model(Arc::new(NormalMeanModel::default()), DistanceMetric::Euclidean).unwrap()
    }

    #[test]
    fn schedule_decreases_and_ess_follows_alpha() {
        let p = problem();
        let g = PriorProposal::new(p.model_arc());
        let mut cfg = SmcConfig::new(500, KernelFamily::Gaussian, 0.9);
        cfg.stop.max_stages = 30;
        let out = adaptive_smc(&p, &g, &cfg, 3).unwrap();
        for w in out.stages.windows(2) {
            assert!(w[1].h <= w[0].h);
            let target = 0.9 * w[0].ess_after;
            assert!((w[1].ess_before - target).abs() <= 1e-6 * w[0].ess_after, "stage {}", w[1].stage);
            if w[1].resampled {
                assert_eq!(w[1].ess_after, 500.0);
            }
            assert!(w[1].simulator_calls > w[0].simulator_calls);
        }
        assert_eq!(out.stages.len(), 31);
        assert_eq!(out.stop, StopReason::MaxStages);
    }

    #[test]
    fn stop_on_min_h() {
        let p = problem();
        let g = PriorProposal::new(p.model_arc());
        let mut cfg = SmcConfig::new(200, KernelFamily::Gaussian, 0.5);
        cfg.stop.min_h = 1.0;
        let out = adaptive_smc(&p, &g, &cfg, 1).unwrap();
        assert_eq!(out.stop, StopReason::MinScale);
        let last = out.stages.last().unwrap();
        assert!(last.h < 1.0);
        assert!(out.stages[..out.stages.len() - 1].iter().all(|r| r.h >= 1.0));
    }

    #[test]
    fn rejects_bad_alpha() {
        let p = problem();
        let g = PriorProposal::new(p.model_arc());
        let cfg = SmcConfig::new(10, KernelFamily::Gaussian, 1.0);
        assert!(matches!(adaptive_smc(&p, &g, &cfg, 1), Err(AbcError::Config(_))));
    }
}
