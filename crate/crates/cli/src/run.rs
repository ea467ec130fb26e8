//! Executing a configuration against the core samplers.

use std::time::Instant;

use likefree_core::importance::{
    importance_rejection_sample, importance_sample, knn_importance_sample, rejection_control_sample, ImportanceConfig,
    KnnConfig, RejectionControlConfig, ThresholdRule,
};
use likefree_core::mcmc::{
    abc_mcmc, abc_mcmc_method2, abc_mcmc_method3, augmented_h_mcmc, truncate_by_h, AugmentedConfig, HProposal,
    McmcConfig, PseudoPrior,
};
use likefree_core::models::StateJump;
use likefree_core::rejection::{rejection_sample, rejection_sample_auto_h, AutoHConfig, RejectionConfig};
use likefree_core::smc::{
    adaptive_smc, sis_rejection_control, MoveProposal, SisConfig, SmcConfig, StageThresholds, StopRule,
};
use likefree_core::{
    AbcError, ChainTrace, GaussianRandomWalk, NormalProposal, ParticlePopulation, PriorProposal, Problem, Proposal,
    ProposalKernel, RunStatistics, SmoothingKernel,
};

use crate::config::{ChainSettings, ProposalSpec, RunConfiguration, SamplerSettings, StageThresholdSpec, Threshold};
use crate::summary::{fmt_value, Summary};

/// Rows of parameter values with raw weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleTable {
    pub dim: usize,
    pub thetas: Vec<Vec<f64>>,
    pub raw_weights: Vec<f64>,
}

impl SampleTable {
    fn from_population(population: &ParticlePopulation, dim: usize) -> Self {
        Self {
            dim,
            thetas: population.particles.iter().map(|p| p.theta.as_slice().to_vec()).collect(),
            raw_weights: population.raw_weights(),
        }
    }

    fn unweighted(thetas: Vec<Vec<f64>>, dim: usize) -> Self {
        let raw_weights = vec![1.0; thetas.len()];
        Self { dim, thetas, raw_weights }
    }
}

/// A per-iteration or per-stage log written next to the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LogTable {
    pub file_name: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Everything a finished sampler hands back, before normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub samples: SampleTable,
    pub stats: RunStatistics,
    /// Sampler-specific diagnostics, in display order.
    pub extra: Vec<(String, String)>,
    pub log: Option<LogTable>,
}

/// A failed run with whatever was known when it stopped.
#[derive(Debug)]
pub struct RunFailure {
    pub error: AbcError,
    pub partial: Vec<(String, String)>,
}

impl RunOutput {
    /// Diagnostics in file order. Fails when every weight is zero.
    pub fn diagnostics(&self, cfg: &RunConfiguration) -> Result<Vec<(String, String)>, RunFailure> {
        let mut d = self.run_statistics(cfg);
        let summary = Summary::compute(&self.samples.thetas, &self.samples.raw_weights, self.samples.dim)
            .map_err(|error| RunFailure { error, partial: d.clone() })?;
        d.extend(self.extra.iter().cloned());
        d.extend(summary.entries());
        Ok(d)
    }

    /// Statistics that do not need a valid weight vector.
    pub fn run_statistics(&self, cfg: &RunConfiguration) -> Vec<(String, String)> {
        vec![
            ("sampler".into(), cfg.sampler.kind().to_string()),
            ("seed".into(), cfg.seed.to_string()),
            ("simulator_calls".into(), self.stats.simulator_calls.to_string()),
            ("acceptance_rate".into(), fmt_value(self.stats.acceptance_rate)),
            ("wall_time_seconds".into(), fmt_value(self.stats.wall_time)),
            ("rows".into(), self.samples.thetas.len().to_string()),
        ]
    }
}

/// Exit status for an error class.
pub fn exit_code(error: &AbcError) -> i32 {
    match error_class(error) {
        "config" => 2,
        "degenerate" => 3,
        "budget" => 4,
        _ => 5,
    }
}

pub fn error_class(error: &AbcError) -> &'static str {
    match error {
        AbcError::Config(_) | AbcError::InvalidInput(_) | AbcError::DimensionMismatch { .. } | AbcError::Registry(_) => {
            "config"
        }
        AbcError::DegeneratePopulation { .. } | AbcError::DegenerateSelection(_) | AbcError::ScheduleStall { .. } => {
            "degenerate"
        }
        AbcError::BudgetExhausted { .. }
        | AbcError::ParticleBudgetExhausted { .. }
        | AbcError::StageFailure { .. }
        | AbcError::Initialisation { .. }
        | AbcError::StuckIteration { .. } => "budget",
        _ => "internal",
    }
}

fn broadcast(v: &[f64], dim: usize) -> Vec<f64> {
    if v.len() == 1 {
        vec![v[0]; dim]
    } else {
        v.to_vec()
    }
}

fn independence_proposal(cfg: &RunConfiguration, problem: &Problem) -> Result<Box<dyn Proposal>, AbcError> {
    let dim = problem.model().param_dim();
    match &cfg.proposal {
        ProposalSpec::Prior => Ok(Box::new(PriorProposal::new(problem.model_arc()))),
        ProposalSpec::Normal { mean, sd } => Ok(Box::new(NormalProposal::diagonal(broadcast(mean, dim), &broadcast(sd, dim))?)),
        other => Err(AbcError::Config(format!("{other:?} is not an independence proposal"))),
    }
}

fn chain_proposal(cfg: &RunConfiguration, problem: &Problem) -> Result<Box<dyn ProposalKernel>, AbcError> {
    let dim = problem.model().param_dim();
    match &cfg.proposal {
        ProposalSpec::RandomWalk { sd } => Ok(Box::new(GaussianRandomWalk::diagonal(&broadcast(sd, dim))?)),
        ProposalSpec::StateJump => Ok(Box::new(StateJump)),
        other => Err(AbcError::Config(format!("{other:?} is not a random-walk proposal"))),
    }
}

fn fixed_kernel(cfg: &RunConfiguration) -> Result<SmoothingKernel, AbcError> {
    let h = cfg.kernel.h.ok_or_else(|| AbcError::Config("this sampler needs [kernel] h".into()))?;
    SmoothingKernel::new(cfg.kernel.family, h)
}

fn mcmc_config(cfg: &RunConfiguration, chain: &ChainSettings) -> Result<McmcConfig, AbcError> {
    let mut m = McmcConfig::new(fixed_kernel(cfg)?, chain.iterations);
    m.t = chain.t;
    m.init_max_tries = chain.init_max_tries;
    Ok(m)
}

fn sis_config(cfg: &RunConfiguration) -> Option<SisConfig> {
    let SamplerSettings::SisRc { n, t, schedule, thresholds, strategy, stage_budget_factor } = &cfg.sampler else {
        return None;
    };
    let mut s = SisConfig::new(*n, cfg.kernel.family, schedule.clone());
    s.t = *t;
    s.thresholds = match thresholds {
        StageThresholdSpec::PerStage(c) => StageThresholds::PerStage(c.clone()),
        StageThresholdSpec::Quantile(q) => StageThresholds::Quantile(*q),
    };
    s.strategy = *strategy;
    s.stage_budget_factor = *stage_budget_factor;
    Some(s)
}

fn smc_config(cfg: &RunConfiguration) -> Option<SmcConfig> {
    let SamplerSettings::AdaptiveSmc {
        n,
        t,
        alpha,
        resample_threshold,
        min_move_rate,
        min_h,
        max_stages,
        scheme,
        moves_per_stage,
        move_scale,
    } = &cfg.sampler
    else {
        return None;
    };
    let mut s = SmcConfig::new(*n, cfg.kernel.family, *alpha);
    s.t = *t;
    s.resample_threshold = Some(*resample_threshold);
    s.stop = StopRule { min_move_rate: *min_move_rate, min_h: *min_h, max_stages: *max_stages };
    s.scheme = *scheme;
    s.moves = MoveProposal::ScaledCovariance(*move_scale);
    s.moves_per_stage = *moves_per_stage;
    Some(s)
}

/// Checks that need the constructed model: proposal construction and the
/// samplers' own validation.
pub fn validate_sampler(cfg: &RunConfiguration, problem: &Problem) -> Result<(), AbcError> {
    if cfg.sampler.kind().is_chain() {
        chain_proposal(cfg, problem)?;
    } else {
        independence_proposal(cfg, problem)?;
    }
    if cfg.sampler.kind().takes_h() {
        fixed_kernel(cfg)?;
    }
    if let Some(s) = sis_config(cfg) {
        s.validate()?;
    }
    if let Some(s) = smc_config(cfg) {
        s.validate()?;
    }
    Ok(())
}

fn trace_log(trace: &ChainTrace, dim: usize) -> LogTable {
    let mut header = vec!["iteration".to_string()];
    header.extend((1..=dim).map(|k| format!("theta_{k}")));
    header.extend(["kernel_mass", "accepted", "h", "cumulative_simulator_calls"].map(String::from));
    let rows = trace
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut row = vec![i.to_string()];
            row.extend(s.theta.as_slice().iter().map(|x| fmt_value(*x)));
            row.push(fmt_value(s.kernel_mass()));
            row.push(u8::from(s.accepted).to_string());
            row.push(fmt_value(s.h));
            row.push(s.cumulative_calls.to_string());
            row
        })
        .collect();
    LogTable { file_name: "trace.csv", header, rows }
}

fn chain_output(trace: &ChainTrace, burn_in: usize, dim: usize, start: Instant) -> RunOutput {
    let thetas = trace.states[burn_in..].iter().map(|s| s.theta.as_slice().to_vec()).collect();
    let calls = trace.calls_per_iteration();
    let max_calls = calls.iter().copied().max().unwrap_or(0);
    let mean_calls = if calls.is_empty() { 0.0 } else { calls.iter().sum::<u64>() as f64 / calls.len() as f64 };
    RunOutput {
        samples: SampleTable::unweighted(thetas, dim),
        stats: RunStatistics {
            simulator_calls: trace.simulator_calls,
            acceptance_rate: trace.acceptance_rate(),
            wall_time: start.elapsed().as_secs_f64(),
            ess_final: f64::NAN,
        },
        extra: vec![
            ("iterations".into(), trace.iterations().to_string()),
            ("burn_in".into(), burn_in.to_string()),
            ("init_simulator_calls".into(), trace.init_calls.to_string()),
            ("mean_calls_per_iteration".into(), fmt_value(mean_calls)),
            ("max_calls_per_iteration".into(), max_calls.to_string()),
        ],
        log: Some(trace_log(trace, dim)),
    }
}

/// Run the configured sampler.
pub fn execute(cfg: &RunConfiguration) -> Result<RunOutput, AbcError> {
    let start = Instant::now();
    let problem = cfg.problem()?;
    let dim = problem.model().param_dim();
    let seed = cfg.seed;
    let population_output = |population: &ParticlePopulation, stats: RunStatistics, extra| RunOutput {
        samples: SampleTable::from_population(population, dim),
        stats,
        extra,
        log: None,
    };

    Ok(match &cfg.sampler {
        SamplerSettings::Rejection { n, bound, max_attempts } => {
            let mut rc = RejectionConfig::new(*n, fixed_kernel(cfg)?);
            rc.bound = *bound;
            rc.max_attempts = *max_attempts;
            let out = rejection_sample(&problem, independence_proposal(cfg, &problem)?.as_ref(), &rc, seed)?;
            let thetas = out.samples.iter().map(|s| s.as_slice().to_vec()).collect();
            RunOutput {
                samples: SampleTable::unweighted(thetas, dim),
                stats: out.stats,
                extra: vec![("h".into(), fmt_value(rc.kernel.scale()))],
                log: None,
            }
        }
        SamplerSettings::RejectionAutoH { n, budget, ratio_bound } => {
            let ac = AutoHConfig { n: *n, budget: *budget, family: cfg.kernel.family, ratio_bound: *ratio_bound };
            let out = rejection_sample_auto_h(&problem, independence_proposal(cfg, &problem)?.as_ref(), &ac, seed)?;
            let thetas = out.samples.samples.iter().map(|s| s.as_slice().to_vec()).collect();
            RunOutput {
                samples: SampleTable::unweighted(thetas, dim),
                stats: out.samples.stats,
                extra: vec![("h".into(), fmt_value(out.h)), ("ties_dropped".into(), out.ties.to_string())],
                log: None,
            }
        }
        SamplerSettings::Importance { n, t } => {
            let mut ic = ImportanceConfig::new(*n, fixed_kernel(cfg)?);
            ic.t = *t;
            let out = importance_sample(&problem, independence_proposal(cfg, &problem)?.as_ref(), &ic, seed)?;
            population_output(&out.population, out.stats, vec![("h".into(), fmt_value(ic.kernel.scale()))])
        }
        SamplerSettings::ImportanceRejection { n, t, early_rejection, ratio_bound, max_attempts_per_particle } => {
            let mut ic = ImportanceConfig::new(*n, fixed_kernel(cfg)?);
            ic.t = *t;
            ic.early_rejection = *early_rejection;
            ic.ratio_bound = *ratio_bound;
            ic.max_attempts_per_particle = *max_attempts_per_particle;
            let out = importance_rejection_sample(&problem, independence_proposal(cfg, &problem)?.as_ref(), &ic, seed)?;
            population_output(&out.population, out.stats, vec![("h".into(), fmt_value(ic.kernel.scale()))])
        }
        SamplerSettings::RejectionControl { n, t, threshold } => {
            let mut base = ImportanceConfig::new(*n, fixed_kernel(cfg)?);
            base.t = *t;
            let threshold = match threshold {
                Threshold::Fixed(c) => ThresholdRule::Fixed(*c),
                Threshold::Quantile(q) => ThresholdRule::Quantile(*q),
            };
            let h = base.kernel.scale();
            let out = rejection_control_sample(
                &problem,
                independence_proposal(cfg, &problem)?.as_ref(),
                &RejectionControlConfig { base, threshold },
                seed,
            )?;
            let extra = vec![
                ("h".into(), fmt_value(h)),
                ("threshold".into(), fmt_value(out.threshold)),
                ("m_hat".into(), fmt_value(out.m_hat)),
                ("attempts".into(), out.attempts.to_string()),
            ];
            population_output(&out.population, out.stats, extra)
        }
        SamplerSettings::Knn { n, budget } => {
            let kc = KnnConfig { n: *n, budget: *budget, family: cfg.kernel.family };
            let out = knn_importance_sample(&problem, independence_proposal(cfg, &problem)?.as_ref(), &kc, seed)?;
            population_output(&out.population, out.stats, vec![("h".into(), fmt_value(out.h))])
        }
        SamplerSettings::Mcmc(chain) => {
            let trace = abc_mcmc(&problem, chain_proposal(cfg, &problem)?.as_ref(), &mcmc_config(cfg, chain)?, seed)?;
            chain_output(&trace, chain.burn_in, dim, start)
        }
        SamplerSettings::McmcMethod2(chain) => {
            let trace = abc_mcmc_method2(&problem, chain_proposal(cfg, &problem)?.as_ref(), &mcmc_config(cfg, chain)?, seed)?;
            chain_output(&trace, chain.burn_in, dim, start)
        }
        SamplerSettings::McmcMethod3 { chain, per_iteration_cap } => {
            let trace = abc_mcmc_method3(
                &problem,
                chain_proposal(cfg, &problem)?.as_ref(),
                &mcmc_config(cfg, chain)?,
                *per_iteration_cap,
                seed,
            )?;
            chain_output(&trace, chain.burn_in, dim, start)
        }
        SamplerSettings::AugmentedMcmc { chain, initial_h, h_walk_sd, h_prior_rate, h_max, scheme, truncate_h } => {
            let ac = AugmentedConfig {
                family: cfg.kernel.family,
                iterations: chain.iterations,
                t: chain.t,
                initial_h: *initial_h,
                h_proposal: if *h_walk_sd > 0.0 { HProposal::LogNormalWalk { sd: *h_walk_sd } } else { HProposal::Fixed },
                pseudo_prior: PseudoPrior::TruncatedExponential { rate: *h_prior_rate, h_max: *h_max },
                scheme: *scheme,
                init_max_tries: chain.init_max_tries,
            };
            let trace = augmented_h_mcmc(&problem, chain_proposal(cfg, &problem)?.as_ref(), &ac, seed)?;
            let mut out = chain_output(&trace, chain.burn_in, dim, start);
            if let Some(h_star) = truncate_h {
                let mut kept = trace.clone();
                kept.states.drain(..chain.burn_in);
                let thetas = truncate_by_h(&kept, *h_star)?.iter().map(|t| t.as_slice().to_vec()).collect();
                out.samples = SampleTable::unweighted(thetas, dim);
                out.extra.push(("truncate_h".into(), fmt_value(*h_star)));
            }
            out
        }
        SamplerSettings::SisRc { .. } => {
            let sc = sis_config(cfg).expect("sis settings");
            let out = sis_rejection_control(&problem, independence_proposal(cfg, &problem)?.as_ref(), &sc, seed)?;
            let header = ["stage", "h", "threshold", "attempts", "ess", "m_hat"].map(String::from).to_vec();
            let rows = out
                .stages
                .iter()
                .map(|s| {
                    vec![
                        s.stage.to_string(),
                        fmt_value(s.h),
                        fmt_value(s.threshold),
                        s.attempts.to_string(),
                        fmt_value(s.ess),
                        fmt_value(s.m_hat),
                    ]
                })
                .collect();
            let extra = vec![
                ("h".into(), fmt_value(out.population.tolerance)),
                ("stages".into(), out.stages.len().to_string()),
            ];
            let mut r = population_output(&out.population, out.stats, extra);
            r.log = Some(LogTable { file_name: "stage_log.csv", header, rows });
            r
        }
        SamplerSettings::AdaptiveSmc { .. } => {
            let sc = smc_config(cfg).expect("smc settings");
            let out = adaptive_smc(&problem, independence_proposal(cfg, &problem)?.as_ref(), &sc, seed)?;
            let header = ["stage", "h", "ess_before", "ess_after", "resampled", "move_rate", "simulator_calls"]
                .map(String::from)
                .to_vec();
            let rows = out
                .stages
                .iter()
                .map(|s| {
                    vec![
                        s.stage.to_string(),
                        fmt_value(s.h),
                        fmt_value(s.ess_before),
                        fmt_value(s.ess_after),
                        u8::from(s.resampled).to_string(),
                        fmt_value(s.move_rate),
                        s.simulator_calls.to_string(),
                    ]
                })
                .collect();
            let extra = vec![
                ("h".into(), fmt_value(out.population.tolerance)),
                ("stages".into(), out.stages.len().to_string()),
                ("stop_reason".into(), format!("{:?}", out.stop)),
            ];
            let mut r = population_output(&out.population, out.stats, extra);
            r.log = Some(LogTable { file_name: "stage_log.csv", header, rows });
            r
        }
    })
}
