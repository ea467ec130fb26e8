//! Sequential importance sampling with rejection control.
//!
//! Stage 0 draws particle `i` from `(SEQUENTIAL, i)`. Stage `m >= 1` gives
//! particle `i` the stream `(SEQUENTIAL + 2m, i)` for its first-pass draw and
//! all of its retries.

use std::sync::Mutex;
use std::time::Instant;

use crate::diagnostics::RunStatistics;
use crate::error::{AbcError, Result};
use crate::exec::par_map_indexed;
use crate::importance::{choose_threshold, rc_resume, ThresholdRule};
use crate::kernel::{KernelFamily, SmoothingKernel};
use crate::model::{Problem, Proposal};
use crate::rng::{stages, SeedSource, StreamRng};
use crate::sampling::density_ratio;
use crate::smc::proposal::{build_proposal, ProposalStrategy};
use crate::types::{ParticlePopulation, WeightedParticle};
use crate::weights::ess_from_raw;

/// Attempted draws per particle per stage before the stage fails.
pub const DEFAULT_STAGE_BUDGET_FACTOR: u64 = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum StageThresholds {
    /// `c_m` for stages `1..=M`.
    PerStage(Vec<f64>),
    /// `c_m` is this quantile of the stage's first-pass weights.
    Quantile(f64),
}

impl StageThresholds {
    fn rule(&self, stage: usize) -> ThresholdRule {
        match self {
            StageThresholds::PerStage(c) => ThresholdRule::Fixed(c[stage - 1]),
            StageThresholds::Quantile(p) => ThresholdRule::Quantile(*p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SisConfig {
    pub n: usize,
    pub family: KernelFamily,
    /// `h₀ ≥ h₁ ≥ … ≥ h_M`; `h₀` may be infinite.
    pub schedule: Vec<f64>,
    pub thresholds: StageThresholds,
    pub strategy: ProposalStrategy,
    pub t: usize,
    /// The stage fails after `stage_budget_factor · N` attempts.
    pub stage_budget_factor: u64,
}

impl SisConfig {
    pub fn new(n: usize, family: KernelFamily, schedule: Vec<f64>) -> Self {
        Self {
            n,
            family,
            schedule,
            thresholds: StageThresholds::Quantile(0.5),
            strategy: ProposalStrategy::Kde,
            t: 1,
            stage_budget_factor: DEFAULT_STAGE_BUDGET_FACTOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t == 0 {
            return Err(AbcError::Config("N and T must be at least 1".into()));
        }
        if self.schedule.is_empty() {
            return Err(AbcError::Config("the tolerance schedule is empty".into()));
        }
        if self.schedule.iter().any(|h| !(*h > 0.0)) || self.schedule[1..].iter().any(|h| !h.is_finite()) {
            return Err(AbcError::Config("scales must be positive, and only h₀ may be infinite".into()));
        }
        if self.schedule.windows(2).any(|w| w[1] > w[0]) {
            return Err(AbcError::Config("the tolerance schedule must be non-increasing".into()));
        }
        match &self.thresholds {
            StageThresholds::PerStage(c) => {
                if c.len() != self.schedule.len() - 1 {
                    return Err(AbcError::Config(format!(
                        "{} thresholds given for {} stages",
                        c.len(),
                        self.schedule.len() - 1
                    )));
                }
                if let Some(bad) = c.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
                    return Err(AbcError::Config(format!("threshold c must be finite and >= 0, got {bad}")));
                }
            }
            StageThresholds::Quantile(p) => ThresholdRule::Quantile(*p).validate()?,
        }
        if self.stage_budget_factor == 0 {
            return Err(AbcError::Config("stage budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SisStageRecord {
    pub stage: usize,
    pub h: f64,
    /// `c_m`; zero for stage 0.
    pub threshold: f64,
    pub attempts: u64,
    pub ess: f64,
    /// Mean acceptance probability over the stage's attempts.
    pub m_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SisOutput {
    pub population: ParticlePopulation,
    pub stages: Vec<SisStageRecord>,
    pub stats: RunStatistics,
}

struct Draw {
    particle: WeightedParticle,
}

fn weigh(
    problem: &Problem,
    g: &dyn Proposal,
    kernel: Option<&SmoothingKernel>,
    t: usize,
    rng: &mut StreamRng,
    attempt: u64,
) -> Result<(Draw, f64)> {
    let theta = g.sample(rng);
    let ratio = density_ratio(problem, g, &theta, attempt)?;
    let (summaries, distances) = problem.simulate_replicates(&theta, t, rng)?;
    let mass = match kernel {
        Some(k) => distances.iter().map(|&d| k.eval_unchecked(d)).sum::<f64>() / t as f64,
        None => 1.0,
    };
    let w = mass * ratio;
    Ok((Draw { particle: WeightedParticle::new(theta, summaries, w) }, w))
}

fn stage_kernel(family: KernelFamily, h: f64) -> Result<Option<SmoothingKernel>> {
    if h.is_infinite() {
        Ok(None)
    } else {
        SmoothingKernel::new(family, h).map(Some)
    }
}

/// Sequential importance sampling with rejection control. Stage 0 weighs
/// draws from `proposal` by `K_{h₀} π / g` (just `π / g` for `h₀ = ∞`).
/// Each later stage samples from a density built on the previous
/// population and passes every particle through a `min{1, w/c_m}` test,
/// retrying until it survives with weight `w / r`.
pub fn sis_rejection_control(
    problem: &Problem,
    proposal: &dyn Proposal,
    cfg: &SisConfig,
    seed: u64,
) -> Result<SisOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let seeds = SeedSource::new(seed);
    let t = cfg.t;

    let k0 = stage_kernel(cfg.family, cfg.schedule[0])?;
    let initial = par_map_indexed(cfg.n, |i| {
        let mut rng = seeds.stream(stages::SEQUENTIAL, i as u64);
        weigh(problem, proposal, k0.as_ref(), t, &mut rng, i as u64).map(|(d, _)| d.particle)
    })?;
    let mut population = ParticlePopulation::new(initial, cfg.schedule[0]);
    population.normalise()?;
    let mut calls = (cfg.n * t) as u64;
    let mut total_attempts = cfg.n as u64;
    let mut records = vec![SisStageRecord {
        stage: 0,
        h: cfg.schedule[0],
        threshold: 0.0,
        attempts: cfg.n as u64,
        ess: population.ess()?,
        m_hat: 1.0,
    }];

    let budget = cfg.stage_budget_factor.saturating_mul(cfg.n as u64);
    for (m, &h) in cfg.schedule.iter().enumerate().skip(1) {
        let g = build_proposal(&population, cfg.strategy)?;
        let kernel = stage_kernel(cfg.family, h)?;
        let stream = stages::SEQUENTIAL + 2 * m as u64;
        let draw = |rng: &mut StreamRng, i: usize, k: u64| weigh(problem, &g, kernel.as_ref(), t, rng, (i as u64) << 32 | k);
        let first: Vec<(StreamRng, (Draw, f64))> = par_map_indexed(cfg.n, |i| {
            let mut rng = seeds.stream(stream, i as u64);
            let first = draw(&mut rng, i, 0)?;
            Ok((rng, first))
        })?;
        let first_weights: Vec<f64> = first.iter().map(|(_, (_, w))| *w).collect();
        let c = choose_threshold(cfg.thresholds.rule(m), &first_weights)?;
        let slots: Vec<Mutex<Option<(StreamRng, (Draw, f64))>>> = first.into_iter().map(|x| Mutex::new(Some(x))).collect();
        let outcomes = par_map_indexed(cfg.n, |i| {
            let (mut rng, pending) = slots[i].lock().expect("unpoisoned").take().expect("taken once");
            let r = rc_resume(pending, c, budget, i, &mut rng, |rng, k| draw(rng, i, k), |d, w| {
                let mut p = d.particle;
                p.raw_weight = w;
                p
            });
            match r {
                Err(AbcError::ParticleBudgetExhausted { attempts, .. }) => Ok(Err(attempts)),
                Err(e) => Err(e),
                Ok(p) => Ok(Ok(p)),
            }
        })?;
        let attempts: u64 = outcomes.iter().map(|o| o.as_ref().map_or_else(|a| *a, |p| p.attempts)).sum();
        let accepted = outcomes.iter().filter(|o| o.is_ok()).count();
        calls += attempts * t as u64;
        total_attempts += attempts;
        if accepted < cfg.n || attempts > budget {
            return Err(AbcError::StageFailure { stage: m, attempts, accepted, target: cfg.n });
        }
        let done: Vec<_> = outcomes.into_iter().map(|o| o.expect("all accepted")).collect();
        let r_sum: f64 = done.iter().map(|p| p.r_sum).sum();
        population = ParticlePopulation::new(done.into_iter().map(|p| p.particle).collect(), h);
        population.normalise()?;
        log::debug!("stage {m}: h = {h}, c = {c}, {attempts} attempts");
        records.push(SisStageRecord {
            stage: m,
            h,
            threshold: c,
            attempts,
            ess: population.ess()?,
            m_hat: r_sum / attempts as f64,
        });
    }

    let ess_final = ess_from_raw(&population.raw_weights())?;
    let stats = RunStatistics {
        simulator_calls: calls,
        acceptance_rate: (cfg.n * cfg.schedule.len()) as f64 / total_attempts as f64,
        wall_time: start.elapsed().as_secs_f64(),
        ess_final,
    };
    Ok(SisOutput { population, stages: records, stats })
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
    fn infinite_h0_from_prior_has_equal_weights() {
        let p = problem();
        let g = PriorProposal::new(p.model_arc());
        let cfg = SisConfig::new(300, KernelFamily::Gaussian, vec![f64::INFINITY]);
        let out = sis_rejection_control(&p, &g, &cfg, 5).unwrap();
        assert!(out.population.particles.iter().all(|q| q.raw_weight == 1.0));
        assert_eq!(out.stages[0].ess, 300.0);
        assert_eq!(out.stats.simulator_calls, 300);
    }

    #[test]
    fn zero_threshold_accepts_everything_first_time() {
        let p = problem();
        let g = PriorProposal::new(p.model_arc());
        let mut cfg = SisConfig::new(200, KernelFamily::Gaussian, vec![f64::INFINITY, 5.0, 1.0]);
        cfg.thresholds = StageThresholds::PerStage(vec![0.0, 0.0]);
        let out = sis_rejection_control(&p, &g, &cfg, 9).unwrap();
        for rec in &out.stages[1..] {
            assert_eq!(rec.attempts, 200);
            assert_eq!(rec.m_hat, 1.0);
        }
        // Plain sequential importance weights: w = K_h(d) π / g_m.
        let prev = {
            let mut c = cfg.clone();
            c.schedule.pop();
            c.thresholds = StageThresholds::PerStage(vec![0.0]);
            sis_rejection_control(&p, &g, &c, 9).unwrap().population
        };
        let gm = build_proposal(&prev, ProposalStrategy::Kde).unwrap();
        let k = SmoothingKernel::new(KernelFamily::Gaussian, 1.0).unwrap();
        for q in out.population.particles.iter().take(20) {
            let d = p.distance(&q.summaries[0]).unwrap();
            let w = k.eval(d).unwrap() * p.prior_density(&q.theta) / gm.density(&q.theta);
            assert!((q.raw_weight / w - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn schedule_must_decrease() {
        let p = problem();
        let g = PriorProposal::new(p.model_arc());
        let cfg = SisConfig::new(10, KernelFamily::Gaussian, vec![1.0, 2.0]);
        assert!(matches!(sis_rejection_control(&p, &g, &cfg, 1), Err(AbcError::Config(_))));
    }

    #[test]
    fn stage_budget_failure_is_reported() {
        let p = problem();
        let g = PriorProposal::new(p.model_arc());
        let mut cfg = SisConfig::new(20, KernelFamily::Uniform, vec![f64::INFINITY, 1e-9]);
        cfg.stage_budget_factor = 2;
        cfg.thresholds = StageThresholds::PerStage(vec![1.0]);
        match sis_rejection_control(&p, &g, &cfg, 1) {
            Err(AbcError::StageFailure { stage: 1, target: 20, accepted, .. }) => assert!(accepted < 20),
            other => panic!("{other:?}"),
        }
    }
}
