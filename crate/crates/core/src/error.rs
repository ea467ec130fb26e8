use thiserror::Error;

/// Errors raised by the samplers and their supporting machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Every raw weight in a population is zero.
    #[error("degenerate population: all {n} weights are zero")]
    DegeneratePopulation { n: usize },

    #[error("degenerate selection: {0}")]
    DegenerateSelection(String),

    #[error("budget exhausted after {attempts} attempts ({accepted} of {target} accepted)")]
    BudgetExhausted {
        attempts: u64,
        accepted: usize,
        target: usize,
    },

    #[error("budget exhausted for particle {particle} after {attempts} attempts")]
    ParticleBudgetExhausted { particle: usize, attempts: u64 },

    /// An acceptance probability exceeded one: the bound M is too small.
    #[error("acceptance probability {probability} > 1 at attempt {attempt}; bound M is too small")]
    BoundTooSmall { attempt: u64, probability: f64 },

    /// Early-rejection gate probability exceeded one.
    #[error("early-rejection gate probability {probability} > 1 at attempt {attempt}")]
    GateBoundViolation { attempt: u64, probability: f64 },

    #[error("proposal density is zero at a sampled parameter (attempt {attempt})")]
    ProposalSupport { attempt: u64 },

    #[error("chain initialisation failed after {tries} tries; try a larger tolerance")]
    Initialisation { tries: u64 },

    #[error("iteration {iteration} stuck after {calls} simulator calls (theta = {theta:?}, proposal = {proposal:?})")]
    StuckIteration {
        iteration: usize,
        calls: u64,
        theta: Vec<f64>,
        proposal: Vec<f64>,
    },

    #[error("stage {stage} failed: {attempts} attempts, {accepted} of {target} particles accepted")]
    StageFailure {
        stage: usize,
        attempts: u64,
        accepted: usize,
        target: usize,
    },

    #[error("tolerance schedule stalled at stage {stage}: h = {h}, achieved ESS {achieved}, target {target}")]
    ScheduleStall {
        stage: usize,
        h: f64,
        achieved: f64,
        target: f64,
    },

    #[error("oracle resolution check failed: {0}")]
    OracleResolution(String),

    #[error("model registry: {0}")]
    Registry(String),
}

pub type Result<T, E = AbcError> = std::result::Result<T, E>;
