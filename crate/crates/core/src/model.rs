//! The generative-model interface and the proposal densities samplers draw
//! parameters from.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::distance::DistanceMetric;
use crate::error::{AbcError, Result};
use crate::rng::StreamRng;
use crate::types::{ParamVector, SummaryVector};

/// A model whose likelihood is intractable but which can be simulated.
///
/// Implementations must be stateless (or internally synchronised): the same
/// model is shared by every worker.
pub trait GenerativeModel: Send + Sync {
    fn name(&self) -> &str;
    fn param_dim(&self) -> usize;
    fn summary_dim(&self) -> usize;
    fn sample_prior(&self, rng: &mut StreamRng) -> ParamVector;
    /// Prior density π(θ); zero outside the support.
    fn prior_density(&self, theta: &ParamVector) -> f64;
    /// Draw s ~ p(s | θ).
    fn simulate_summary(&self, theta: &ParamVector, rng: &mut StreamRng) -> Result<SummaryVector>;
    /// The observed summary the fixture was built around, if any.
    fn observed_summary(&self) -> Option<SummaryVector> {
        None
    }
}

/// A model, the observed summaries and the metric comparing them.
pub struct Problem {
    model: Arc<dyn GenerativeModel>,
    observed: SummaryVector,
    metric: DistanceMetric,
    calls: AtomicU64,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("model", &self.model.name())
            .field("observed", &self.observed)
            .field("metric", &self.metric)
            .finish()
    }
}

impl Problem {
    pub fn new(model: Arc<dyn GenerativeModel>, observed: SummaryVector, metric: DistanceMetric) -> Result<Self> {
        if observed.dim() != model.summary_dim() {
            return Err(AbcError::DimensionMismatch {
                expected: model.summary_dim(),
                got: observed.dim(),
            });
        }
        if let Some(q) = metric.dimension() {
            if q != observed.dim() {
                return Err(AbcError::DimensionMismatch {
                    expected: observed.dim(),
                    got: q,
                });
            }
        }
        Ok(Self {
            model,
            observed,
            metric,
            calls: AtomicU64::new(0),
        })
    }

    /// Use the model's own observed summary.
    pub fn from_model(model: Arc<dyn GenerativeModel>, metric: DistanceMetric) -> Result<Self> {
        let observed = model
            .observed_summary()
            .ok_or_else(|| AbcError::Config(format!("model '{}' has no observed summary", model.name())))?;
        Self::new(model, observed, metric)
    }

    pub fn model(&self) -> &dyn GenerativeModel {
        self.model.as_ref()
    }

    pub fn model_arc(&self) -> Arc<dyn GenerativeModel> {
        Arc::clone(&self.model)
    }

    pub fn observed(&self) -> &SummaryVector {
        &self.observed
    }

    pub fn metric(&self) -> &DistanceMetric {
        &self.metric
    }

    pub fn prior_density(&self, theta: &ParamVector) -> f64 {
        self.model.prior_density(theta)
    }

    /// Simulate one summary at `theta`, checking its dimension.
    pub fn simulate(&self, theta: &ParamVector, rng: &mut StreamRng) -> Result<SummaryVector> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let s = self.model.simulate_summary(theta, rng)?;
        if s.dim() != self.model.summary_dim() {
            return Err(AbcError::DimensionMismatch {
                expected: self.model.summary_dim(),
                got: s.dim(),
            });
        }
        Ok(s)
    }

    pub fn distance(&self, s: &SummaryVector) -> Result<f64> {
        self.metric.distance(s, &self.observed)
    }

    /// Simulate `t` replicates at `theta`, returning them with their distances.
    pub fn simulate_replicates(
        &self,
        theta: &ParamVector,
        t: usize,
        rng: &mut StreamRng,
    ) -> Result<(Vec<SummaryVector>, Vec<f64>)> {
        let mut summaries = Vec::with_capacity(t);
        let mut distances = Vec::with_capacity(t);
        for _ in 0..t {
            let s = self.simulate(theta, rng)?;
            distances.push(self.distance(&s)?);
            summaries.push(s);
        }
        Ok((summaries, distances))
    }

    /// Every simulator call made through this problem, including speculative
    /// work discarded by the parallel schedulers. Samplers report their own
    /// deterministic counts; this one is for partial statistics on failure.
    pub fn total_simulator_calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

/// An independence sampling density g(θ).
pub trait Proposal: Send + Sync {
    fn sample(&self, rng: &mut StreamRng) -> ParamVector;
    fn density(&self, theta: &ParamVector) -> f64;
    /// True when g is the model prior, making π/g ≡ 1 exactly.
    fn is_prior(&self) -> bool {
        false
    }
}

/// Draw parameters from the model prior.
pub struct PriorProposal {
    model: Arc<dyn GenerativeModel>,
}

impl PriorProposal {
    pub fn new(model: Arc<dyn GenerativeModel>) -> Self {
        Self { model }
    }
}

impl Proposal for PriorProposal {
    fn sample(&self, rng: &mut StreamRng) -> ParamVector {
        self.model.sample_prior(rng)
    }

    fn density(&self, theta: &ParamVector) -> f64 {
        self.model.prior_density(theta)
    }

    fn is_prior(&self) -> bool {
        true
    }
}

/// Multivariate normal with a Cholesky-factored covariance.
#[derive(Debug, Clone)]
pub struct MultivariateNormal {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl MultivariateNormal {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(AbcError::DimensionMismatch {
                expected: d,
                got: cov.nrows(),
            });
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| AbcError::Config("normal covariance is not positive definite".into()))?
            .l();
        let log_det: f64 = chol.diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self {
            mean: DVector::from_vec(mean),
            chol,
            log_norm,
        })
    }

    /// Independent coordinates with standard deviations `sd`.
    pub fn diagonal(mean: Vec<f64>, sd: &[f64]) -> Result<Self> {
        if sd.len() != mean.len() || sd.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(AbcError::Config("normal standard deviations must be positive".into()));
        }
        let var = DVector::from_iterator(sd.len(), sd.iter().map(|s| s * s));
        Self::new(mean, DMatrix::from_diagonal(&var))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    /// Draw `mean + L z`.
    pub fn sample_around(&self, centre: &[f64], rng: &mut StreamRng) -> Vec<f64> {
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| StandardNormal.sample(rng)));
        let step = &self.chol * z;
        centre.iter().zip(step.iter()).map(|(c, s)| c + s).collect()
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        let centre: Vec<f64> = self.mean.iter().copied().collect();
        self.sample_around(&centre, rng)
    }

    /// Log density of `x` for a normal with this covariance centred at `centre`.
    pub fn log_pdf_around(&self, centre: &[f64], x: &[f64]) -> f64 {
        let diff = DVector::from_iterator(self.dim(), x.iter().zip(centre).map(|(a, b)| a - b));
        let z = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("cholesky factor has a positive diagonal");
        self.log_norm - 0.5 * z.norm_squared()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let centre: Vec<f64> = self.mean.iter().copied().collect();
        self.log_pdf_around(&centre, x)
    }
}

/// A fixed multivariate normal importance density.
#[derive(Debug, Clone)]
pub struct NormalProposal {
    dist: MultivariateNormal,
}

impl NormalProposal {
    pub fn new(dist: MultivariateNormal) -> Self {
        Self { dist }
    }

    pub fn diagonal(mean: Vec<f64>, sd: &[f64]) -> Result<Self> {
        Ok(Self::new(MultivariateNormal::diagonal(mean, sd)?))
    }

    pub fn distribution(&self) -> &MultivariateNormal {
        &self.dist
    }
}

impl Proposal for NormalProposal {
    fn sample(&self, rng: &mut StreamRng) -> ParamVector {
        ParamVector::from_vec_unchecked(self.dist.sample(rng))
    }

    fn density(&self, theta: &ParamVector) -> f64 {
        self.dist.log_pdf(theta).exp()
    }
}

/// A Markov proposal g(θ, θ′).
pub trait ProposalKernel: Send + Sync {
    fn sample(&self, from: &ParamVector, rng: &mut StreamRng) -> ParamVector;
    /// `ln g(from, to)`.
    fn log_density(&self, from: &ParamVector, to: &ParamVector) -> f64;
    /// Symmetric kernels let the acceptance ratio skip the proposal terms.
    fn is_symmetric(&self) -> bool {
        false
    }
}

/// Gaussian random walk `θ′ ~ N(θ, Σ)`.
#[derive(Debug, Clone)]
pub struct GaussianRandomWalk {
    step: MultivariateNormal,
}

impl GaussianRandomWalk {
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        Ok(Self {
            step: MultivariateNormal::new(vec![0.0; d], cov)?,
        })
    }

    pub fn isotropic(dim: usize, sd: f64) -> Result<Self> {
        Ok(Self {
            step: MultivariateNormal::diagonal(vec![0.0; dim], &vec![sd; dim])?,
        })
    }

    pub fn diagonal(sd: &[f64]) -> Result<Self> {
        Ok(Self {
            step: MultivariateNormal::diagonal(vec![0.0; sd.len()], sd)?,
        })
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.step.covariance()
    }
}

impl ProposalKernel for GaussianRandomWalk {
    fn sample(&self, from: &ParamVector, rng: &mut StreamRng) -> ParamVector {
        ParamVector::from_vec_unchecked(self.step.sample_around(from, rng))
    }

    fn log_density(&self, from: &ParamVector, to: &ParamVector) -> f64 {
        self.step.log_pdf_around(from, to)
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}
