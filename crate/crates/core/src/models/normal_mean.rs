use rand_distr::{Distribution, Normal as NormalDist};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::quadrature::{simpson, GridSpec, GriddedDensity};
use crate::error::{AbcError, Result};
use crate::kernel::{KernelFamily, SmoothingKernel};
use crate::model::GenerativeModel;
use crate::rng::StreamRng;
use crate::types::{ParamVector, SummaryVector};

/// Normal data with unknown mean θ and known sd σ, normal prior on θ.
/// The summary is the sample mean of `n_obs` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMeanModel {
    pub n_obs: usize,
    pub sigma: f64,
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub s_obs: f64,
}

impl Default for NormalMeanModel {
    fn default() -> Self {
        Self { n_obs: 10, sigma: 1.0, prior_mean: 0.0, prior_sd: 10.0, s_obs: 1.0 }
    }
}

impl NormalMeanModel {
    pub fn new(n_obs: usize, sigma: f64, prior_mean: f64, prior_sd: f64, s_obs: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !(prior_sd > 0.0 && prior_sd.is_finite()) {
            return Err(AbcError::Config("sigma and prior_sd must be positive and finite".into()));
        }
        if !prior_mean.is_finite() || !s_obs.is_finite() {
            return Err(AbcError::Config("prior_mean and s_obs must be finite".into()));
        }
        Ok(Self { n_obs, sigma, prior_mean, prior_sd, s_obs })
    }

    /// Sampling sd of the summary, σ/√n.
    pub fn summary_sd(&self) -> f64 {
        self.sigma / (self.n_obs as f64).sqrt()
    }

    /// Prior-predictive sd of the summary.
    pub fn prior_predictive_sd(&self) -> f64 {
        (self.prior_sd.powi(2) + self.summary_sd().powi(2)).sqrt()
    }

    fn prior(&self) -> Normal {
        Normal::new(self.prior_mean, self.prior_sd).expect("validated")
    }

    /// `∫ K_h(|s − s_obs|) p(s | θ) ds` by Simpson's rule.
    pub fn abc_likelihood(&self, theta: f64, kernel: &SmoothingKernel) -> Result<f64> {
        if kernel.is_infinite() {
            return Err(AbcError::InvalidInput("quadrature needs a finite tolerance".into()));
        }
        let h = kernel.scale();
        let tau = self.summary_sd();
        let reach = if kernel.compact_support() { h } else { 10.0 * h };
        let lo = (self.s_obs - reach).max(theta - 12.0 * tau);
        let hi = (self.s_obs + reach).min(theta + 12.0 * tau);
        if lo >= hi {
            return Ok(0.0);
        }
        let f = |s: f64| {
            let z = (s - theta) / tau;
            // Limits lie inside a compact support; clamp so rounding at the
            // edge cannot fall outside it.
            let x = ((s - self.s_obs).abs() / h).min(if kernel.compact_support() { 1.0 } else { f64::MAX });
            kernel.family().base(x) / h * (-0.5 * z * z).exp() / (tau * (2.0 * std::f64::consts::PI).sqrt())
        };
        let pieces = [(lo, self.s_obs.clamp(lo, hi)), (self.s_obs.clamp(lo, hi), hi)];
        let scale = tau.min(h);
        let mut total = 0.0;
        for (a, b) in pieces {
            if b > a {
                let n = ((b - a) / scale * 100.0).ceil().clamp(200.0, 200_000.0) as usize;
                total += simpson(f, a, b, n);
            }
        }
        Ok(total)
    }

    /// Closed form of [`abc_likelihood`](Self::abc_likelihood) for the
    /// uniform and gaussian families.
    pub fn abc_likelihood_closed_form(&self, theta: f64, kernel: &SmoothingKernel) -> Option<f64> {
        let h = kernel.scale();
        let tau = self.summary_sd();
        match kernel.family() {
            KernelFamily::Uniform => {
                let z = Normal::new(0.0, 1.0).expect("standard");
                let (a, b) = ((self.s_obs - h - theta) / tau, (self.s_obs + h - theta) / tau);
                // Difference of upper tails when both limits sit above the mean.
                let mass = if a > 0.0 { z.cdf(-a) - z.cdf(-b) } else { z.cdf(b) - z.cdf(a) };
                Some(mass / (2.0 * h))
            }
            KernelFamily::Gaussian => {
                let sd = (tau * tau + h * h).sqrt();
                Some(Normal::new(theta, sd).expect("positive").pdf(self.s_obs))
            }
            _ => None,
        }
    }
}

impl GenerativeModel for NormalMeanModel {
    fn name(&self) -> &str {
        "normal_mean"
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn summary_dim(&self) -> usize {
        1
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> ParamVector {
        let d = NormalDist::new(self.prior_mean, self.prior_sd).expect("validated");
        ParamVector::scalar(d.sample(rng))
    }

    fn prior_density(&self, theta: &ParamVector) -> f64 {
        self.prior().pdf(theta[0])
    }

    // The sample mean of n normal draws is itself normal; drawing it directly
    // gives the same summary distribution at a fraction of the cost.
    fn simulate_summary(&self, theta: &ParamVector, rng: &mut StreamRng) -> Result<SummaryVector> {
        if self.n_obs == 0 {
            return Err(AbcError::InvalidInput("cannot simulate a summary of zero observations".into()));
        }
        let d = NormalDist::new(theta[0], self.summary_sd()).expect("validated");
        Ok(SummaryVector::scalar(d.sample(rng)))
    }

    fn observed_summary(&self) -> Option<SummaryVector> {
        Some(SummaryVector::scalar(self.s_obs))
    }
}

/// Conjugate posterior `(μ_post, σ_post)` of the mean.
pub fn exact_posterior(model: &NormalMeanModel) -> (f64, f64) {
    let n = model.n_obs as f64;
    let precision = 1.0 / model.prior_sd.powi(2) + n / model.sigma.powi(2);
    let mean = (model.prior_mean / model.prior_sd.powi(2) + n * model.s_obs / model.sigma.powi(2)) / precision;
    (mean, precision.recip().sqrt())
}

fn tabulate(model: &NormalMeanModel, kernel: &SmoothingKernel, grid: GridSpec) -> Result<GriddedDensity> {
    use rayon::prelude::*;
    let prior = model.prior();
    let values: Result<Vec<f64>> = grid
        .points()
        .into_par_iter()
        .map(|t| Ok(prior.pdf(t) * model.abc_likelihood(t, kernel)?))
        .collect();
    GriddedDensity::from_unnormalised(grid, values?)
}

/// Tabulate the ABC posterior `π_ABC(θ | s_obs)` of the fixture by
/// integrating the kernel against the summary density at every grid node.
///
/// Without a grid, a coarse pass over the prior range locates the mass and a
/// second pass resolves it. Either way the result is checked to resolve the
/// density (at least 50 steps per sd, negligible mass at the ends).
pub fn abc_posterior_quadrature(
    model: &NormalMeanModel,
    kernel: &SmoothingKernel,
    grid: Option<GridSpec>,
) -> Result<GriddedDensity> {
    let density = match grid {
        Some(grid) => tabulate(model, kernel, grid)?,
        None => {
            let (m, s) = exact_posterior(model);
            let lo = (model.prior_mean - 12.0 * model.prior_sd).min(m - 12.0 * s);
            let hi = (model.prior_mean + 12.0 * model.prior_sd).max(m + 12.0 * s);
            let coarse = tabulate(model, kernel, GridSpec::new(lo, hi, 4001)?)?;
            let (a, b) = coarse.support(1e-14);
            tabulate(model, kernel, GridSpec::new(a, b, 4001)?)?
        }
    };
    density.check_resolution(50.0)?;
    Ok(density)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_posterior_documented() {
        let (m, s) = exact_posterior(&NormalMeanModel::default());
        assert!((m - 1000.0 / 1001.0).abs() < 1e-12);
        assert!((s * s - 100.0 / 1001.0).abs() < 1e-12);

        let flat = NormalMeanModel { prior_sd: 1e6, ..Default::default() };
        let (m, s) = exact_posterior(&flat);
        assert!((m - 1.0).abs() < 1e-9 && (s * s - 0.1).abs() < 1e-9);

        let none = NormalMeanModel { n_obs: 0, ..Default::default() };
        assert_eq!(exact_posterior(&none), (0.0, 10.0));
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        let model = NormalMeanModel::default();
        for family in [KernelFamily::Uniform, KernelFamily::Gaussian] {
            for h in [1e-3, 0.05, 0.3, 2.0] {
                let k = SmoothingKernel::new(family, h).unwrap();
                for theta in [-1.0, 0.5, 1.0, 1.3, 3.0] {
                    let q = model.abc_likelihood(theta, &k).unwrap();
                    let c = model.abc_likelihood_closed_form(theta, &k).unwrap();
                    assert!((q - c).abs() <= 1e-8 * c.max(1e-300) + 1e-300, "{family} h={h} θ={theta}: {q} vs {c}");
                }
            }
        }
    }

    #[test]
    fn small_h_limit_is_exact_posterior() {
        let model = NormalMeanModel::default();
        let (m, s) = exact_posterior(&model);
        for family in KernelFamily::ALL {
            let k = SmoothingKernel::new(family, 1e-4 * s).unwrap();
            let oracle = abc_posterior_quadrature(&model, &k, None).unwrap();
            let exact = Normal::new(m, s).unwrap();
            assert!(oracle.max_abs_difference(|t| exact.pdf(t)) < 1e-3, "{family}");
        }
    }

    #[test]
    fn large_h_limit_is_prior() {
        let model = NormalMeanModel::default();
        let k = SmoothingKernel::new(KernelFamily::Uniform, 1e6 * model.prior_predictive_sd()).unwrap();
        let oracle = abc_posterior_quadrature(&model, &k, None).unwrap();
        let prior = Normal::new(0.0, 10.0).unwrap();
        assert!(oracle.max_abs_difference(|t| prior.pdf(t)) < 1e-3);
    }

    #[test]
    fn halving_the_grid_step_is_stable() {
        let model = NormalMeanModel::default();
        let k = SmoothingKernel::new(KernelFamily::Epanechnikov, 0.2).unwrap();
        let oracle = abc_posterior_quadrature(&model, &k, None).unwrap();
        let fine = abc_posterior_quadrature(&model, &k, Some(oracle.grid.halved())).unwrap();
        assert!(fine.max_abs_difference(|t| oracle.pdf(t)) < 1e-4);
    }

    #[test]
    fn coarse_grid_is_reported() {
        let model = NormalMeanModel::default();
        let k = SmoothingKernel::new(KernelFamily::Uniform, 0.1).unwrap();
        let grid = GridSpec::new(-2.0, 4.0, 50).unwrap();
        assert!(matches!(abc_posterior_quadrature(&model, &k, Some(grid)), Err(AbcError::OracleResolution(_))));
    }
}
