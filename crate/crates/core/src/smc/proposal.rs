use nalgebra::DMatrix;
use rand::Rng;

use crate::diagnostics::weighted_moments_of;
use crate::error::{AbcError, Result};
use crate::model::{MultivariateNormal, Proposal};
use crate::rng::StreamRng;
use crate::types::{ParamVector, ParticlePopulation};
use crate::weights::{log_sum_exp, normalise_weights};

/// Multiplier applied to the weighted population covariance for kernel
/// density proposals and random-walk moves.
pub const COVARIANCE_SCALE: f64 = 2.0;

/// How a stage's sampling density is built from the previous population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProposalStrategy {
    /// Gaussian kernel density estimate with covariance
    /// [`COVARIANCE_SCALE`] × the weighted population covariance.
    #[default]
    Kde,
    /// A normal moment-matched to the weighted population.
    Parametric,
}

/// Add `1e-8 · trace / d` to the diagonal (or `1e-8` when the trace is zero)
/// if `cov` is not comfortably positive definite. Returns whether it did.
pub fn regularise_covariance(cov: &mut DMatrix<f64>) -> bool {
    let d = cov.nrows();
    let trace = cov.trace();
    let healthy = cov.clone().cholesky().is_some_and(|c| {
        let diag = c.l().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        lo > 0.0 && (hi / lo).powi(2) < 1e12
    });
    if healthy {
        return false;
    }
    let jitter = if trace > 0.0 && trace.is_finite() { 1e-8 * trace / d as f64 } else { 1e-8 };
    for k in 0..d {
        cov[(k, k)] += jitter;
    }
    log::warn!("population covariance is near-singular; added {jitter:e} to its diagonal");
    true
}

/// Weighted covariance of a population scaled by `scale`, regularised.
pub fn scaled_population_covariance(population: &ParticlePopulation, scale: f64) -> Result<DMatrix<f64>> {
    let points: Vec<&[f64]> = population.particles.iter().map(|p| p.theta.as_slice()).collect();
    let (_, cov) = weighted_moments_of(&points, &population.raw_weights())?;
    let mut cov = cov * scale;
    regularise_covariance(&mut cov);
    Ok(cov)
}

/// A sampling density built from a weighted population.
#[derive(Debug, Clone)]
pub enum PopulationProposal {
    Kde(KernelDensity),
    Parametric(MultivariateNormal),
}

impl Proposal for PopulationProposal {
    fn sample(&self, rng: &mut StreamRng) -> ParamVector {
        match self {
            PopulationProposal::Kde(k) => k.sample(rng),
            PopulationProposal::Parametric(n) => ParamVector::from_vec_unchecked(n.sample(rng)),
        }
    }

    fn density(&self, theta: &ParamVector) -> f64 {
        match self {
            PopulationProposal::Kde(k) => k.log_density(theta).exp(),
            PopulationProposal::Parametric(n) => n.log_pdf(theta).exp(),
        }
    }
}

/// `Σᵢ Wᵢ φ(θ; θᵢ, Σ)` over the positively weighted particles.
#[derive(Debug, Clone)]
pub struct KernelDensity {
    centres: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
    cumulative: Vec<f64>,
    noise: MultivariateNormal,
    /// Inverse of the Cholesky factor, row-major.
    inv_chol: Vec<f64>,
    log_norm: f64,
}

impl KernelDensity {
    pub fn new(centres: Vec<Vec<f64>>, raw_weights: &[f64], cov: DMatrix<f64>) -> Result<Self> {
        let w = normalise_weights(raw_weights)?;
        let (centres, w): (Vec<Vec<f64>>, Vec<f64>) =
            centres.into_iter().zip(w).filter(|(_, w)| *w > 0.0).unzip();
        let d = centres[0].len();
        let noise = MultivariateNormal::new(vec![0.0; d], cov.clone())?;
        let chol = cov.cholesky().expect("checked by MultivariateNormal").l();
        let inv = chol.clone().try_inverse().ok_or_else(|| AbcError::Config("singular kernel covariance".into()))?;
        let inv_chol = (0..d).flat_map(|r| (0..d).map(move |c| (r, c))).map(|(r, c)| inv[(r, c)]).collect();
        let log_det: f64 = chol.diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        let mut acc = 0.0;
        let cumulative = w
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        Ok(Self { centres, log_weights: w.iter().map(|x| x.ln()).collect(), cumulative, noise, inv_chol, log_norm })
    }

    pub fn len(&self) -> usize {
        self.centres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centres.is_empty()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.noise.covariance()
    }

    pub fn sample(&self, rng: &mut StreamRng) -> ParamVector {
        let u: f64 = rng.random::<f64>() * self.cumulative.last().expect("nonempty");
        let i = self.cumulative.partition_point(|c| *c <= u).min(self.centres.len() - 1);
        ParamVector::from_vec_unchecked(self.noise.sample_around(&self.centres[i], rng))
    }

    fn log_component(&self, i: usize, x: &[f64], buf: &mut [f64]) -> f64 {
        let d = x.len();
        for (b, (xi, ci)) in buf.iter_mut().zip(x.iter().zip(&self.centres[i])) {
            *b = xi - ci;
        }
        let mut q = 0.0;
        for r in 0..d {
            let z: f64 = (0..=r).map(|c| self.inv_chol[r * d + c] * buf[c]).sum();
            q += z * z;
        }
        self.log_norm - 0.5 * q
    }

    pub fn log_density(&self, theta: &ParamVector) -> f64 {
        let mut buf = vec![0.0; theta.dim()];
        let terms: Vec<f64> = (0..self.centres.len())
            .map(|i| self.log_weights[i] + self.log_component(i, theta, &mut buf))
            .collect();
        log_sum_exp(terms.iter().copied())
    }
}

/// Build the next stage's sampling density from a weighted population.
pub fn build_proposal(previous: &ParticlePopulation, strategy: ProposalStrategy) -> Result<PopulationProposal> {
    let raw = previous.raw_weights();
    normalise_weights(&raw)?;
    match strategy {
        ProposalStrategy::Kde => {
            let cov = scaled_population_covariance(previous, COVARIANCE_SCALE)?;
            let centres = previous.particles.iter().map(|p| p.theta.to_vec()).collect();
            Ok(PopulationProposal::Kde(KernelDensity::new(centres, &raw, cov)?))
        }
        ProposalStrategy::Parametric => {
            let points: Vec<&[f64]> = previous.particles.iter().map(|p| p.theta.as_slice()).collect();
            let (mean, mut cov) = weighted_moments_of(&points, &raw)?;
            regularise_covariance(&mut cov);
            Ok(PopulationProposal::Parametric(MultivariateNormal::new(mean.iter().copied().collect(), cov)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSource;
    use crate::types::{SummaryVector, WeightedParticle};

    fn population(points: &[Vec<f64>], w: &[f64]) -> ParticlePopulation {
        let particles = points
            .iter()
            .zip(w)
            .map(|(p, &w)| WeightedParticle::new(ParamVector::new(p.clone()).unwrap(), vec![SummaryVector::scalar(0.0)], w))
            .collect();
        ParticlePopulation::new(particles, 1.0)
    }

    #[test]
    fn single_particle_kde_is_one_normal() {
        let pop = population(&[vec![1.5, -2.0]], &[1.0]);
        let PopulationProposal::Kde(k) = build_proposal(&pop, ProposalStrategy::Kde).unwrap() else { panic!() };
        assert_eq!(k.len(), 1);
        let cov = k.covariance();
        let normal = MultivariateNormal::new(vec![1.5, -2.0], cov).unwrap();
        let x = ParamVector::new(vec![1.5, -2.0 + 1e-5]).unwrap();
        assert!((k.log_density(&x) - normal.log_pdf(&x)).abs() < 1e-9);
    }

    #[test]
    fn kde_matches_direct_mixture() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        let w = [1.0, 2.0, 1.0];
        let pop = population(&pts, &w);
        let proposal = build_proposal(&pop, ProposalStrategy::Kde).unwrap();
        let PopulationProposal::Kde(k) = &proposal else { panic!() };
        let var = k.covariance()[(0, 0)];
        let x = 0.7;
        let direct: f64 = pts
            .iter()
            .zip(&w)
            .map(|(p, wi)| wi / 4.0 * (-(x - p[0]).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt())
            .sum();
        assert!((proposal.density(&ParamVector::scalar(x)) / direct - 1.0).abs() < 1e-12);
        // Mixture lower bound at a support point.
        let at = proposal.density(&ParamVector::scalar(1.0));
        assert!(at >= 0.5 / (2.0 * std::f64::consts::PI * var).sqrt());
    }

    #[test]
    fn parametric_draws_match_population_moments() {
        let pts = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![3.0, 2.0], vec![-1.0, 0.5]];
        let w = [1.0, 2.0, 1.0, 0.5];
        let pop = population(&pts, &w);
        let g = build_proposal(&pop, ProposalStrategy::Parametric).unwrap();
        let p: Vec<&[f64]> = pts.iter().map(|x| x.as_slice()).collect();
        let (mean, cov) = weighted_moments_of(&p, &w).unwrap();
        let mut rng = SeedSource::new(11).stream(0, 0);
        let n = 100_000;
        let draws: Vec<ParamVector> = (0..n).map(|_| g.sample(&mut rng)).collect();
        for k in 0..2 {
            let m = draws.iter().map(|d| d[k]).sum::<f64>() / n as f64;
            let se = (cov[(k, k)] / n as f64).sqrt();
            assert!((m - mean[k]).abs() < 3.0 * se, "coordinate {k}");
            let v = draws.iter().map(|d| (d[k] - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            // sd of a sample variance of normals is σ² √(2/(n−1)).
            assert!((v - cov[(k, k)]).abs() < 3.0 * cov[(k, k)] * (2.0 / (n as f64 - 1.0)).sqrt());
        }
    }

    #[test]
    fn degenerate_covariance_is_regularised() {
        let mut cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(regularise_covariance(&mut cov));
        assert!(cov.clone().cholesky().is_some());
        let mut zero = DMatrix::zeros(1, 1);
        assert!(regularise_covariance(&mut zero));
        assert_eq!(zero[(0, 0)], 1e-8);
        let mut fine = DMatrix::identity(3, 3);
        assert!(!regularise_covariance(&mut fine));
    }
}
