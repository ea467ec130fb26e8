//! Run configurations: typed settings read from a [`Document`].
//!
//! A configuration names a sampler at the top level and fills four
//! sections:
//!
//! ```text
//! sampler = adaptive_smc
//! seed = 7
//! output_dir = runs/smc
//!
//! [model]        # name plus numeric model parameters
//! name = normal_mean
//!
//! [kernel]       # family, h where the sampler takes one, metric
//! family = gaussian
//!
//! [proposal]     # prior | normal | random_walk | state_jump
//! kind = prior
//!
//! [sampler]      # sampler-specific settings, see `defaults`
//! n = 1000
//! alpha = 0.9
//! ```

mod document;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use likefree_core::mcmc::UpdateScheme;
use likefree_core::models::{ModelParams, ModelRegistry};
use likefree_core::smc::{ProposalStrategy, ResamplingScheme};
use likefree_core::{DistanceMetric, KernelFamily, Problem};

pub use document::{ConfigError, ConfigErrors, Document, Entry, Renderer, Section};

/// Every default value a configuration can fall back on.
pub mod defaults {
    pub const SEED: u64 = 0;
    pub const OUTPUT_DIR: &str = "likefree-output";
    pub const MODEL: &str = "normal_mean";
    pub const FAMILY: &str = "gaussian";
    pub const METRIC: &str = "euclidean";
    /// Random-walk proposal standard deviation, per coordinate.
    pub const WALK_SD: f64 = 1.0;
    pub const N: usize = 1000;
    pub const T: usize = 1;
    pub const ITERATIONS: usize = 10_000;
    pub const BURN_IN: usize = 0;
    pub const MAX_ATTEMPTS: u64 = likefree_core::rejection::DEFAULT_MAX_ATTEMPTS;
    pub const MAX_ATTEMPTS_PER_PARTICLE: u64 = likefree_core::importance::DEFAULT_MAX_ATTEMPTS_PER_PARTICLE;
    pub const INIT_MAX_TRIES: u64 = likefree_core::mcmc::DEFAULT_INIT_MAX_TRIES;
    pub const PER_ITERATION_CAP: u64 = likefree_core::mcmc::DEFAULT_PER_ITER_SIM_CAP;
    pub const THRESHOLD_QUANTILE: f64 = 0.5;
    pub const H_WALK_SD: f64 = 0.3;
    pub const H_PRIOR_RATE: f64 = 0.0;
    pub const UPDATE_SCHEME: &str = "joint";
    pub const STRATEGY: &str = "kde";
    pub const STAGE_BUDGET_FACTOR: u64 = likefree_core::smc::DEFAULT_STAGE_BUDGET_FACTOR;
    pub const ALPHA: f64 = 0.9;
    /// The resampling threshold defaults to half the population size.
    pub const RESAMPLE_FRACTION: f64 = 0.5;
    pub const MIN_MOVE_RATE: f64 = 0.015;
    pub const MIN_H: f64 = 0.0;
    pub const MAX_STAGES: usize = 200;
    pub const RESAMPLING: &str = "systematic";
    pub const MOVES_PER_STAGE: usize = 1;
    pub const MOVE_SCALE: f64 = likefree_core::smc::COVARIANCE_SCALE;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Rejection,
    RejectionAutoH,
    Importance,
    ImportanceRejection,
    RejectionControl,
    Knn,
    Mcmc,
    McmcMethod2,
    McmcMethod3,
    AugmentedMcmc,
    SisRc,
    AdaptiveSmc,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 12] = [
        SamplerKind::Rejection,
        SamplerKind::RejectionAutoH,
        SamplerKind::Importance,
        SamplerKind::ImportanceRejection,
        SamplerKind::RejectionControl,
        SamplerKind::Knn,
        SamplerKind::Mcmc,
        SamplerKind::McmcMethod2,
        SamplerKind::McmcMethod3,
        SamplerKind::AugmentedMcmc,
        SamplerKind::SisRc,
        SamplerKind::AdaptiveSmc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Rejection => "rejection",
            SamplerKind::RejectionAutoH => "rejection_auto_h",
            SamplerKind::Importance => "importance",
            SamplerKind::ImportanceRejection => "importance_rejection",
            SamplerKind::RejectionControl => "rejection_control",
            SamplerKind::Knn => "knn",
            SamplerKind::Mcmc => "mcmc",
            SamplerKind::McmcMethod2 => "mcmc_method2",
            SamplerKind::McmcMethod3 => "mcmc_method3",
            SamplerKind::AugmentedMcmc => "augmented_mcmc",
            SamplerKind::SisRc => "sis_rc",
            SamplerKind::AdaptiveSmc => "adaptive_smc",
        }
    }

    /// Whether the sampler moves a chain with a proposal kernel rather than
    /// drawing from an independence proposal.
    pub fn is_chain(self) -> bool {
        matches!(self, SamplerKind::Mcmc | SamplerKind::McmcMethod2 | SamplerKind::McmcMethod3 | SamplerKind::AugmentedMcmc)
    }

    /// Whether `[kernel] h` is required.
    pub fn takes_h(self) -> bool {
        matches!(
            self,
            SamplerKind::Rejection
                | SamplerKind::Importance
                | SamplerKind::ImportanceRejection
                | SamplerKind::RejectionControl
                | SamplerKind::Mcmc
                | SamplerKind::McmcMethod2
                | SamplerKind::McmcMethod3
        )
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        SamplerKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = SamplerKind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown sampler '{s}' (expected one of: {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricSpec {
    Euclidean,
    WeightedEuclidean(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Present exactly when the sampler takes a fixed tolerance.
    pub h: Option<f64>,
    pub metric: MetricSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProposalSpec {
    Prior,
    /// Independent normal with the given means and standard deviations.
    Normal { mean: Vec<f64>, sd: Vec<f64> },
    /// Gaussian random walk; one sd is used for every coordinate.
    RandomWalk { sd: Vec<f64> },
    /// Jumps to one of the other lattice states (three-state model).
    StateJump,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Fixed(f64),
    Quantile(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StageThresholdSpec {
    PerStage(Vec<f64>),
    Quantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSettings {
    pub iterations: usize,
    pub t: usize,
    /// Leading states left out of the samples file.
    pub burn_in: usize,
    pub init_max_tries: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerSettings {
    Rejection { n: usize, bound: Option<f64>, max_attempts: u64 },
    RejectionAutoH { n: usize, budget: u64, ratio_bound: Option<f64> },
    Importance { n: usize, t: usize },
    ImportanceRejection { n: usize, t: usize, early_rejection: bool, ratio_bound: Option<f64>, max_attempts_per_particle: u64 },
    RejectionControl { n: usize, t: usize, threshold: Threshold },
    Knn { n: usize, budget: u64 },
    Mcmc(ChainSettings),
    McmcMethod2(ChainSettings),
    McmcMethod3 { chain: ChainSettings, per_iteration_cap: u64 },
    AugmentedMcmc {
        chain: ChainSettings,
        initial_h: f64,
        /// Log-scale walk sd for h; zero keeps h fixed.
        h_walk_sd: f64,
        h_prior_rate: f64,
        h_max: f64,
        scheme: UpdateScheme,
        /// Keep only states with h at or below this in the samples file.
        truncate_h: Option<f64>,
    },
    SisRc {
        n: usize,
        t: usize,
        schedule: Vec<f64>,
        thresholds: StageThresholdSpec,
        strategy: ProposalStrategy,
        stage_budget_factor: u64,
    },
    AdaptiveSmc {
        n: usize,
        t: usize,
        alpha: f64,
        resample_threshold: f64,
        min_move_rate: f64,
        min_h: f64,
        max_stages: usize,
        scheme: ResamplingScheme,
        moves_per_stage: usize,
        move_scale: f64,
    },
}

impl SamplerSettings {
    pub fn kind(&self) -> SamplerKind {
        match self {
            SamplerSettings::Rejection { .. } => SamplerKind::Rejection,
            SamplerSettings::RejectionAutoH { .. } => SamplerKind::RejectionAutoH,
            SamplerSettings::Importance { .. } => SamplerKind::Importance,
            SamplerSettings::ImportanceRejection { .. } => SamplerKind::ImportanceRejection,
            SamplerSettings::RejectionControl { .. } => SamplerKind::RejectionControl,
            SamplerSettings::Knn { .. } => SamplerKind::Knn,
            SamplerSettings::Mcmc(_) => SamplerKind::Mcmc,
            SamplerSettings::McmcMethod2(_) => SamplerKind::McmcMethod2,
            SamplerSettings::McmcMethod3 { .. } => SamplerKind::McmcMethod3,
            SamplerSettings::AugmentedMcmc { .. } => SamplerKind::AugmentedMcmc,
            SamplerSettings::SisRc { .. } => SamplerKind::SisRc,
            SamplerSettings::AdaptiveSmc { .. } => SamplerKind::AdaptiveSmc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfiguration {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: ModelSpec,
    pub kernel: KernelSpec,
    pub proposal: ProposalSpec,
    pub sampler: SamplerSettings,
}

/// Parse and validate a configuration, reporting every problem found.
pub fn parse_config(text: &str) -> Result<RunConfiguration, ConfigErrors> {
    let doc = Document::parse(text)?;
    RunConfiguration::from_document(&doc)
}

// ---------------------------------------------------------------------------
// Values

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ")
}

trait FromValue: Sized {
    const WHAT: &'static str;
    fn from_value(s: &str) -> Option<Self>;
}

impl FromValue for f64 {
    const WHAT: &'static str = "a number";
    fn from_value(s: &str) -> Option<Self> {
        s.parse::<f64>().ok().filter(|x| !x.is_nan())
    }
}

impl FromValue for u64 {
    const WHAT: &'static str = "a nonnegative integer";
    fn from_value(s: &str) -> Option<Self> {
        s.replace('_', "").parse().ok()
    }
}

impl FromValue for usize {
    const WHAT: &'static str = "a nonnegative integer";
    fn from_value(s: &str) -> Option<Self> {
        s.replace('_', "").parse().ok()
    }
}

impl FromValue for bool {
    const WHAT: &'static str = "true or false";
    fn from_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl FromValue for String {
    const WHAT: &'static str = "a string";
    fn from_value(s: &str) -> Option<Self> {
        Some(s.to_string())
    }
}

impl FromValue for Vec<f64> {
    const WHAT: &'static str = "a comma-separated list of numbers";
    fn from_value(s: &str) -> Option<Self> {
        if s.is_empty() {
            return Some(Vec::new());
        }
        s.split(',').map(|x| f64::from_value(x.trim())).collect()
    }
}

impl FromValue for KernelFamily {
    const WHAT: &'static str = "one of uniform, gaussian, epanechnikov, triangular";
    fn from_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl FromValue for ResamplingScheme {
    const WHAT: &'static str = "systematic or multinomial";
    fn from_value(s: &str) -> Option<Self> {
        match s {
            "systematic" => Some(ResamplingScheme::Systematic),
            "multinomial" => Some(ResamplingScheme::Multinomial),
            _ => None,
        }
    }
}

impl FromValue for ProposalStrategy {
    const WHAT: &'static str = "kde or parametric";
    fn from_value(s: &str) -> Option<Self> {
        match s {
            "kde" => Some(ProposalStrategy::Kde),
            "parametric" => Some(ProposalStrategy::Parametric),
            _ => None,
        }
    }
}

impl FromValue for UpdateScheme {
    const WHAT: &'static str = "joint or component_wise";
    fn from_value(s: &str) -> Option<Self> {
        match s {
            "joint" => Some(UpdateScheme::Joint),
            "component_wise" => Some(UpdateScheme::ComponentWise),
            _ => None,
        }
    }
}

fn scheme_name(s: ResamplingScheme) -> &'static str {
    match s {
        ResamplingScheme::Systematic => "systematic",
        ResamplingScheme::Multinomial => "multinomial",
    }
}

fn strategy_name(s: ProposalStrategy) -> &'static str {
    match s {
        ProposalStrategy::Kde => "kde",
        ProposalStrategy::Parametric => "parametric",
    }
}

fn update_name(s: UpdateScheme) -> &'static str {
    match s {
        UpdateScheme::Joint => "joint",
        UpdateScheme::ComponentWise => "component_wise",
    }
}

fn parse_default<T: FromValue>(s: &str) -> T {
    T::from_value(s).expect("defaults parse")
}

// ---------------------------------------------------------------------------
// Reading

struct Reader<'a> {
    name: &'static str,
    section: Option<&'a Section>,
    asked: BTreeSet<&'static str>,
    errors: Vec<ConfigError>,
}

impl<'a> Reader<'a> {
    fn new(doc: &'a Document, name: &'static str) -> Self {
        Self { name, section: doc.section(name), asked: BTreeSet::new(), errors: Vec::new() }
    }

    fn label(&self) -> String {
        if self.name.is_empty() {
            "the top level".to_string()
        } else {
            format!("[{}]", self.name)
        }
    }

    fn header_line(&self) -> usize {
        self.section.map_or(0, |s| s.line)
    }

    fn entry(&self, key: &str) -> Option<&'a Entry> {
        self.section.and_then(|s| s.entries.iter().find(|e| e.key == key))
    }

    /// Line of `key`, or of the section header when the key is absent.
    fn line(&self, key: &str) -> usize {
        self.entry(key).map_or(self.header_line(), |e| e.line)
    }

    fn fail(&mut self, key: &str, message: impl Into<String>) {
        let line = self.line(key);
        self.errors.push(ConfigError::at(line, message));
    }

    fn get<T: FromValue>(&mut self, key: &'static str) -> Option<T> {
        self.asked.insert(key);
        let entry = self.entry(key)?;
        match T::from_value(&entry.value) {
            Some(v) => Some(v),
            None => {
                self.errors.push(ConfigError::at(
                    entry.line,
                    format!("'{key}' must be {}, found '{}'", T::WHAT, entry.value),
                ));
                None
            }
        }
    }

    fn required<T: FromValue>(&mut self, key: &'static str) -> Option<T> {
        let present = self.entry(key).is_some();
        let v = self.get(key);
        if !present {
            let label = self.label();
            self.fail(key, format!("missing required key '{key}' in {label}"));
        }
        v
    }

    fn or<T: FromValue>(&mut self, key: &'static str, default: T) -> T {
        self.get(key).unwrap_or(default)
    }

    fn check(&mut self, ok: bool, key: &str, message: impl Into<String>) {
        if !ok {
            self.fail(key, message);
        }
    }

    fn positive_count(&mut self, key: &'static str, default: usize) -> usize {
        let v = self.or(key, default);
        self.check(v >= 1, key, format!("'{key}' must be at least 1"));
        v.max(1)
    }

    fn positive_u64(&mut self, key: &'static str, default: u64) -> u64 {
        let v = self.or(key, default);
        self.check(v >= 1, key, format!("'{key}' must be at least 1"));
        v.max(1)
    }

    fn positive_finite(&mut self, key: &'static str, v: f64) {
        self.check(v > 0.0 && v.is_finite(), key, format!("'{key}' must be positive and finite, got {v}"));
    }

    /// Reports keys that were never asked for, then hands back the errors.
    fn finish(mut self, context: &str) -> Vec<ConfigError> {
        if let Some(section) = self.section {
            for e in &section.entries {
                if !self.asked.contains(e.key.as_str()) {
                    let expected: Vec<_> = self.asked.iter().copied().collect();
                    let hint = if expected.is_empty() {
                        String::new()
                    } else {
                        format!(" (expected one of: {})", expected.join(", "))
                    };
                    self.errors.push(ConfigError::at(
                        e.line,
                        format!("unknown key '{}' in {}{context}{hint}", e.key, self.label()),
                    ));
                }
            }
        }
        self.errors
    }
}

const SECTIONS: [&str; 4] = ["model", "kernel", "proposal", "sampler"];

impl RunConfiguration {
    pub fn from_document(doc: &Document) -> Result<Self, ConfigErrors> {
        let mut errors = Vec::new();
        for s in &doc.sections[1..] {
            if !SECTIONS.contains(&s.name.as_str()) {
                errors.push(ConfigError::at(
                    s.line,
                    format!("unknown section [{}] (expected one of: {})", s.name, SECTIONS.join(", ")),
                ));
            }
        }

        let mut top = Reader::new(doc, "");
        let kind = match top.required::<String>("sampler") {
            Some(s) => match s.parse::<SamplerKind>() {
                Ok(k) => Some(k),
                Err(e) => {
                    top.fail("sampler", e);
                    None
                }
            },
            None => None,
        };
        let seed = top.or("seed", defaults::SEED);
        let output_dir = PathBuf::from(top.or("output_dir", defaults::OUTPUT_DIR.to_string()));
        errors.extend(top.finish(""));

        let model = read_model(doc, &mut errors);

        // Without a sampler only the sampler-independent sections can be checked.
        let Some(kind) = kind else {
            errors.sort_by_key(|e| e.line);
            return Err(ConfigErrors(errors));
        };
        let context = format!(" for sampler {kind}");

        let mut kr = Reader::new(doc, "kernel");
        let family = kr.or("family", parse_default::<KernelFamily>(defaults::FAMILY));
        let h = if kind.takes_h() {
            let h = kr.required::<f64>("h");
            if let Some(h) = h {
                kr.positive_finite("h", h);
            }
            h
        } else {
            None
        };
        if matches!(kind, SamplerKind::McmcMethod2 | SamplerKind::McmcMethod3) && family != KernelFamily::Uniform {
            kr.fail("family", format!("{kind} needs the uniform kernel"));
        }
        let metric = match kr.or("metric", defaults::METRIC.to_string()).as_str() {
            "euclidean" => MetricSpec::Euclidean,
            "weighted_euclidean" => MetricSpec::WeightedEuclidean(kr.required("metric_weights").unwrap_or_default()),
            other => {
                kr.fail("metric", format!("unknown metric '{other}' (expected euclidean or weighted_euclidean)"));
                MetricSpec::Euclidean
            }
        };
        errors.extend(kr.finish(&context));

        let proposal = read_proposal(doc, kind, &mut errors);
        let sampler = read_sampler(doc, kind, &mut errors);

        let cfg = RunConfiguration {
            seed,
            output_dir,
            model,
            kernel: KernelSpec { family, h, metric },
            proposal,
            sampler,
        };
        if errors.is_empty() {
            // Cross-section checks need a working model.
            if let Err(e) = cfg.check_against_model(doc) {
                errors.extend(e);
            }
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            errors.sort_by_key(|e| e.line);
            Err(ConfigErrors(errors))
        }
    }

    fn check_against_model(&self, doc: &Document) -> Result<(), Vec<ConfigError>> {
        let line_of = |section: &str| doc.section(section).map_or(0, |s| s.line);
        let problem = self.problem().map_err(|e| vec![ConfigError::at(line_of("model"), e.to_string())])?;
        let dim = problem.model().param_dim();
        let mut errors = Vec::new();
        let mut dims = |what: &str, len: usize| {
            if len != dim && len != 1 {
                errors.push(ConfigError::at(
                    line_of("proposal"),
                    format!("proposal {what} has {len} entries but the model has {dim} parameters"),
                ));
            }
        };
        match &self.proposal {
            ProposalSpec::Normal { mean, sd } => {
                dims("mean", mean.len());
                dims("sd", sd.len());
            }
            ProposalSpec::RandomWalk { sd } => dims("sd", sd.len()),
            ProposalSpec::StateJump if self.model.name != "three_state" => {
                errors.push(ConfigError::at(line_of("proposal"), "state_jump only applies to the three_state model"));
            }
            _ => {}
        }
        if errors.is_empty() {
            if let Err(e) = crate::run::validate_sampler(self, &problem) {
                errors.push(ConfigError::at(line_of("sampler"), e.to_string()));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// The model and distance this configuration describes.
    pub fn problem(&self) -> likefree_core::Result<Problem> {
        let model = ModelRegistry::with_builtins().construct(&self.model.name, &self.model.params)?;
        let metric = match &self.kernel.metric {
            MetricSpec::Euclidean => DistanceMetric::Euclidean,
            MetricSpec::WeightedEuclidean(w) => DistanceMetric::weighted_euclidean(w.clone())?,
        };
        Problem::from_model(model, metric)
    }

    /// Render in the configuration grammar. Every resolved default is
    /// written out, so the result parses back to an equal configuration.
    pub fn render(&self) -> String {
        let mut r = Renderer::default();
        self.render_into(&mut r);
        r.finish()
    }

    pub fn render_into(&self, r: &mut Renderer) {
        r.entry("sampler", self.sampler.kind());
        r.entry("seed", self.seed);
        r.entry("output_dir", self.output_dir.display());

        r.section("model");
        r.entry("name", &self.model.name);
        for (k, v) in &self.model.params {
            r.entry(k, fmt_f64(*v));
        }

        r.section("kernel");
        r.entry("family", self.kernel.family);
        if let Some(h) = self.kernel.h {
            r.entry("h", fmt_f64(h));
        }
        match &self.kernel.metric {
            MetricSpec::Euclidean => r.entry("metric", "euclidean"),
            MetricSpec::WeightedEuclidean(w) => {
                r.entry("metric", "weighted_euclidean");
                r.entry("metric_weights", fmt_list(w));
            }
        }

        r.section("proposal");
        match &self.proposal {
            ProposalSpec::Prior => r.entry("kind", "prior"),
            ProposalSpec::Normal { mean, sd } => {
                r.entry("kind", "normal");
                r.entry("mean", fmt_list(mean));
                r.entry("sd", fmt_list(sd));
            }
            ProposalSpec::RandomWalk { sd } => {
                r.entry("kind", "random_walk");
                r.entry("sd", fmt_list(sd));
            }
            ProposalSpec::StateJump => r.entry("kind", "state_jump"),
        }

        r.section("sampler");
        render_sampler(&self.sampler, r);
    }
}

fn read_model(doc: &Document, errors: &mut Vec<ConfigError>) -> ModelSpec {
    let mut mr = Reader::new(doc, "model");
    let name = mr.or("name", defaults::MODEL.to_string());
    let registry = ModelRegistry::with_builtins();
    if !registry.contains(&name) {
        let names: Vec<_> = registry.names().collect();
        mr.fail("name", format!("unknown model '{name}' (expected one of: {})", names.join(", ")));
    }
    let mut params = ModelParams::new();
    if let Some(section) = mr.section {
        for e in section.entries.iter().filter(|e| e.key != "name") {
            match f64::from_value(&e.value) {
                Some(v) => {
                    params.insert(e.key.clone(), v);
                }
                None => mr.errors.push(ConfigError::at(
                    e.line,
                    format!("model parameter '{}' must be a number, found '{}'", e.key, e.value),
                )),
            }
        }
    }
    errors.extend(mr.errors);
    ModelSpec { name, params }
}

fn read_proposal(doc: &Document, kind: SamplerKind, errors: &mut Vec<ConfigError>) -> ProposalSpec {
    let mut pr = Reader::new(doc, "proposal");
    let default_kind = if kind.is_chain() { "random_walk" } else { "prior" };
    let proposal = match pr.or("kind", default_kind.to_string()).as_str() {
        "prior" if !kind.is_chain() => ProposalSpec::Prior,
        "normal" if !kind.is_chain() => {
            let mean: Vec<f64> = pr.required("mean").unwrap_or_default();
            let sd: Vec<f64> = pr.required("sd").unwrap_or_default();
            let ok = sd.iter().all(|s| *s > 0.0 && s.is_finite()) && mean.iter().all(|m| m.is_finite());
            pr.check(ok, "sd", "normal proposal needs finite means and positive finite sds");
            ProposalSpec::Normal { mean, sd }
        }
        "random_walk" if kind.is_chain() => {
            let sd: Vec<f64> = pr.or("sd", vec![defaults::WALK_SD]);
            pr.check(sd.iter().all(|s| *s > 0.0 && s.is_finite()), "sd", "random walk sds must be positive and finite");
            ProposalSpec::RandomWalk { sd }
        }
        "state_jump" if kind.is_chain() => ProposalSpec::StateJump,
        other => {
            let allowed = if kind.is_chain() { "random_walk or state_jump" } else { "prior or normal" };
            pr.fail("kind", format!("proposal '{other}' cannot drive {kind} (expected {allowed})"));
            ProposalSpec::Prior
        }
    };
    errors.extend(pr.finish(&format!(" for sampler {kind}")));
    proposal
}

fn read_chain(sr: &mut Reader<'_>) -> ChainSettings {
    let iterations = sr.positive_count("iterations", defaults::ITERATIONS);
    let t = sr.positive_count("t", defaults::T);
    let burn_in = sr.or("burn_in", defaults::BURN_IN);
    sr.check(burn_in <= iterations, "burn_in", format!("burn_in {burn_in} exceeds the {iterations} iterations"));
    let init_max_tries = sr.positive_u64("init_max_tries", defaults::INIT_MAX_TRIES);
    ChainSettings { iterations, t, burn_in, init_max_tries }
}

fn read_threshold(sr: &mut Reader<'_>) -> Option<Threshold> {
    let fixed: Option<f64> = sr.get("threshold");
    let quantile: Option<f64> = sr.get("threshold_quantile");
    match (fixed, quantile) {
        (Some(_), Some(_)) => {
            sr.fail("threshold", "give either 'threshold' or 'threshold_quantile', not both");
            None
        }
        (Some(c), None) => {
            sr.check(c > 0.0 && c.is_finite(), "threshold", format!("threshold c must be positive and finite, got {c}"));
            Some(Threshold::Fixed(c))
        }
        (None, q) => {
            let q = q.unwrap_or(defaults::THRESHOLD_QUANTILE);
            sr.check(q > 0.0 && q < 1.0, "threshold_quantile", format!("threshold_quantile must lie in (0,1), got {q}"));
            Some(Threshold::Quantile(q))
        }
    }
}

fn read_sampler(doc: &Document, kind: SamplerKind, errors: &mut Vec<ConfigError>) -> SamplerSettings {
    let mut sr = Reader::new(doc, "sampler");
    let settings = match kind {
        SamplerKind::Rejection => {
            let n = sr.positive_count("n", defaults::N);
            let bound = sr.get::<f64>("bound");
            if let Some(m) = bound {
                sr.positive_finite("bound", m);
            }
            let max_attempts = sr.positive_u64("max_attempts", defaults::MAX_ATTEMPTS);
            SamplerSettings::Rejection { n, bound, max_attempts }
        }
        SamplerKind::RejectionAutoH | SamplerKind::Knn => {
            let n = sr.positive_count("n", defaults::N);
            let budget: u64 = sr.required("budget").unwrap_or(n as u64);
            sr.check(budget >= n as u64, "budget", format!("budget {budget} must be at least n = {n}"));
            if kind == SamplerKind::Knn {
                SamplerSettings::Knn { n, budget }
            } else {
                let ratio_bound = sr.get::<f64>("ratio_bound");
                if let Some(k) = ratio_bound {
                    sr.positive_finite("ratio_bound", k);
                }
                SamplerSettings::RejectionAutoH { n, budget, ratio_bound }
            }
        }
        SamplerKind::Importance => {
            SamplerSettings::Importance { n: sr.positive_count("n", defaults::N), t: sr.positive_count("t", defaults::T) }
        }
        SamplerKind::ImportanceRejection => {
            let n = sr.positive_count("n", defaults::N);
            let t = sr.positive_count("t", defaults::T);
            let early_rejection = sr.or("early_rejection", false);
            let ratio_bound = sr.get::<f64>("ratio_bound");
            if let Some(k) = ratio_bound {
                sr.positive_finite("ratio_bound", k);
            }
            let max_attempts_per_particle = sr.positive_u64("max_attempts_per_particle", defaults::MAX_ATTEMPTS_PER_PARTICLE);
            SamplerSettings::ImportanceRejection { n, t, early_rejection, ratio_bound, max_attempts_per_particle }
        }
        SamplerKind::RejectionControl => {
            let n = sr.positive_count("n", defaults::N);
            let t = sr.positive_count("t", defaults::T);
            let threshold = read_threshold(&mut sr).unwrap_or(Threshold::Quantile(defaults::THRESHOLD_QUANTILE));
            SamplerSettings::RejectionControl { n, t, threshold }
        }
        SamplerKind::Mcmc => SamplerSettings::Mcmc(read_chain(&mut sr)),
        SamplerKind::McmcMethod2 => SamplerSettings::McmcMethod2(read_chain(&mut sr)),
        SamplerKind::McmcMethod3 => {
            let chain = read_chain(&mut sr);
            let per_iteration_cap = sr.positive_u64("per_iteration_cap", defaults::PER_ITERATION_CAP);
            SamplerSettings::McmcMethod3 { chain, per_iteration_cap }
        }
        SamplerKind::AugmentedMcmc => {
            let chain = read_chain(&mut sr);
            let h_max: f64 = sr.required("h_max").unwrap_or(1.0);
            sr.positive_finite("h_max", h_max);
            let initial_h: f64 = sr.or("initial_h", h_max / 2.0);
            sr.check(
                initial_h > 0.0 && initial_h <= h_max,
                "initial_h",
                format!("initial_h must lie in (0, h_max = {h_max}], got {initial_h}"),
            );
            let h_walk_sd: f64 = sr.or("h_walk_sd", defaults::H_WALK_SD);
            sr.check(h_walk_sd >= 0.0 && h_walk_sd.is_finite(), "h_walk_sd", "h_walk_sd must be finite and >= 0");
            let h_prior_rate: f64 = sr.or("h_prior_rate", defaults::H_PRIOR_RATE);
            sr.check(h_prior_rate >= 0.0 && h_prior_rate.is_finite(), "h_prior_rate", "h_prior_rate must be finite and >= 0");
            let scheme = sr.or("scheme", parse_default::<UpdateScheme>(defaults::UPDATE_SCHEME));
            let truncate_h = sr.get::<f64>("truncate_h");
            if let Some(h) = truncate_h {
                sr.positive_finite("truncate_h", h);
            }
            SamplerSettings::AugmentedMcmc { chain, initial_h, h_walk_sd, h_prior_rate, h_max, scheme, truncate_h }
        }
        SamplerKind::SisRc => {
            let n = sr.positive_count("n", defaults::N);
            let t = sr.positive_count("t", defaults::T);
            let schedule: Vec<f64> = sr.required("schedule").unwrap_or_else(|| vec![f64::INFINITY]);
            sr.check(!schedule.is_empty(), "schedule", "schedule needs at least one scale");
            sr.check(
                schedule.iter().all(|h| *h > 0.0) && schedule.iter().skip(1).all(|h| h.is_finite()),
                "schedule",
                "schedule scales must be positive, and only the first may be inf",
            );
            sr.check(schedule.windows(2).all(|w| w[1] <= w[0]), "schedule", "schedule must be non-increasing");
            let per_stage: Option<Vec<f64>> = sr.get("thresholds");
            let quantile: Option<f64> = sr.get("threshold_quantile");
            let thresholds = match (per_stage, quantile) {
                (Some(_), Some(_)) => {
                    sr.fail("thresholds", "give either 'thresholds' or 'threshold_quantile', not both");
                    StageThresholdSpec::Quantile(defaults::THRESHOLD_QUANTILE)
                }
                (Some(c), None) => {
                    let stages = schedule.len().saturating_sub(1);
                    sr.check(c.len() == stages, "thresholds", format!("{} thresholds given for {stages} stages", c.len()));
                    sr.check(
                        c.iter().all(|c| *c >= 0.0 && c.is_finite()),
                        "thresholds",
                        "thresholds must be finite and >= 0",
                    );
                    StageThresholdSpec::PerStage(c)
                }
                (None, q) => {
                    let q = q.unwrap_or(defaults::THRESHOLD_QUANTILE);
                    sr.check(q > 0.0 && q < 1.0, "threshold_quantile", format!("threshold_quantile must lie in (0,1), got {q}"));
                    StageThresholdSpec::Quantile(q)
                }
            };
            let strategy = sr.or("strategy", parse_default::<ProposalStrategy>(defaults::STRATEGY));
            let stage_budget_factor = sr.positive_u64("stage_budget_factor", defaults::STAGE_BUDGET_FACTOR);
            SamplerSettings::SisRc { n, t, schedule, thresholds, strategy, stage_budget_factor }
        }
        SamplerKind::AdaptiveSmc => {
            let n = sr.positive_count("n", defaults::N);
            let t = sr.positive_count("t", defaults::T);
            let alpha: f64 = sr.or("alpha", defaults::ALPHA);
            sr.check(alpha > 0.0 && alpha < 1.0, "alpha", format!("alpha must lie in (0,1), got {alpha}"));
            let resample_threshold: f64 = sr.or("resample_threshold", defaults::RESAMPLE_FRACTION * n as f64);
            sr.check(
                resample_threshold >= 1.0 && resample_threshold <= n as f64,
                "resample_threshold",
                format!("resample_threshold must lie in [1, n = {n}], got {resample_threshold}"),
            );
            let min_move_rate: f64 = sr.or("min_move_rate", defaults::MIN_MOVE_RATE);
            sr.check((0.0..=1.0).contains(&min_move_rate), "min_move_rate", "min_move_rate must lie in [0, 1]");
            let min_h: f64 = sr.or("min_h", defaults::MIN_H);
            sr.check(min_h >= 0.0 && min_h.is_finite(), "min_h", "min_h must be finite and >= 0");
            let max_stages = sr.positive_count("max_stages", defaults::MAX_STAGES);
            let scheme = sr.or("resampling", parse_default::<ResamplingScheme>(defaults::RESAMPLING));
            let moves_per_stage = sr.positive_count("moves_per_stage", defaults::MOVES_PER_STAGE);
            let move_scale: f64 = sr.or("move_scale", defaults::MOVE_SCALE);
            sr.positive_finite("move_scale", move_scale);
            SamplerSettings::AdaptiveSmc {
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
            }
        }
    };
    errors.extend(sr.finish(&format!(" for sampler {kind}")));
    settings
}

fn render_chain(c: &ChainSettings, r: &mut Renderer) {
    r.entry("iterations", c.iterations);
    r.entry("t", c.t);
    r.entry("burn_in", c.burn_in);
    r.entry("init_max_tries", c.init_max_tries);
}

fn render_sampler(s: &SamplerSettings, r: &mut Renderer) {
    match s {
        SamplerSettings::Rejection { n, bound, max_attempts } => {
            r.entry("n", n);
            if let Some(m) = bound {
                r.entry("bound", fmt_f64(*m));
            }
            r.entry("max_attempts", max_attempts);
        }
        SamplerSettings::RejectionAutoH { n, budget, ratio_bound } => {
            r.entry("n", n);
            r.entry("budget", budget);
            if let Some(k) = ratio_bound {
                r.entry("ratio_bound", fmt_f64(*k));
            }
        }
        SamplerSettings::Importance { n, t } => {
            r.entry("n", n);
            r.entry("t", t);
        }
        SamplerSettings::ImportanceRejection { n, t, early_rejection, ratio_bound, max_attempts_per_particle } => {
            r.entry("n", n);
            r.entry("t", t);
            r.entry("early_rejection", early_rejection);
            if let Some(k) = ratio_bound {
                r.entry("ratio_bound", fmt_f64(*k));
            }
            r.entry("max_attempts_per_particle", max_attempts_per_particle);
        }
        SamplerSettings::RejectionControl { n, t, threshold } => {
            r.entry("n", n);
            r.entry("t", t);
            match threshold {
                Threshold::Fixed(c) => r.entry("threshold", fmt_f64(*c)),
                Threshold::Quantile(q) => r.entry("threshold_quantile", fmt_f64(*q)),
            }
        }
        SamplerSettings::Knn { n, budget } => {
            r.entry("n", n);
            r.entry("budget", budget);
        }
        SamplerSettings::Mcmc(c) | SamplerSettings::McmcMethod2(c) => render_chain(c, r),
        SamplerSettings::McmcMethod3 { chain, per_iteration_cap } => {
            render_chain(chain, r);
            r.entry("per_iteration_cap", per_iteration_cap);
        }
        SamplerSettings::AugmentedMcmc { chain, initial_h, h_walk_sd, h_prior_rate, h_max, scheme, truncate_h } => {
            render_chain(chain, r);
            r.entry("initial_h", fmt_f64(*initial_h));
            r.entry("h_walk_sd", fmt_f64(*h_walk_sd));
            r.entry("h_prior_rate", fmt_f64(*h_prior_rate));
            r.entry("h_max", fmt_f64(*h_max));
            r.entry("scheme", update_name(*scheme));
            if let Some(h) = truncate_h {
                r.entry("truncate_h", fmt_f64(*h));
            }
        }
        SamplerSettings::SisRc { n, t, schedule, thresholds, strategy, stage_budget_factor } => {
            r.entry("n", n);
            r.entry("t", t);
            r.entry("schedule", fmt_list(schedule));
            match thresholds {
                StageThresholdSpec::PerStage(c) => r.entry("thresholds", fmt_list(c)),
                StageThresholdSpec::Quantile(q) => r.entry("threshold_quantile", fmt_f64(*q)),
            }
            r.entry("strategy", strategy_name(*strategy));
            r.entry("stage_budget_factor", stage_budget_factor);
        }
        SamplerSettings::AdaptiveSmc {
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
        } => {
            r.entry("n", n);
            r.entry("t", t);
            r.entry("alpha", fmt_f64(*alpha));
            r.entry("resample_threshold", fmt_f64(*resample_threshold));
            r.entry("min_move_rate", fmt_f64(*min_move_rate));
            r.entry("min_h", fmt_f64(*min_h));
            r.entry("max_stages", max_stages);
            r.entry("resampling", scheme_name(*scheme));
            r.entry("moves_per_stage", moves_per_stage);
            r.entry("move_scale", fmt_f64(*move_scale));
        }
    }
}
