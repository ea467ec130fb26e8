use rand_distr::{ChiSquared, Distribution, Normal as NormalDist};
use statrs::distribution::{Continuous, Normal};
use statrs::function::gamma::ln_gamma;

use super::quadrature::{simpson, GridSpec, GriddedDensity};
use crate::error::{AbcError, Result};
use crate::model::GenerativeModel;
use crate::rng::StreamRng;
use crate::types::{ParamVector, SummaryVector};
use crate::kernel::SmoothingKernel;

/// Normal data with unknown mean and sd. θ = (mean, ln sd) with independent
/// normal priors; the summary is (sample mean, ln sample sd).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMeanSdModel {
    pub n_obs: usize,
    pub prior_mean: [f64; 2],
    pub prior_sd: [f64; 2],
    pub s_obs: [f64; 2],
}

impl Default for NormalMeanSdModel {
    fn default() -> Self {
        Self { n_obs: 20, prior_mean: [0.0, 0.0], prior_sd: [5.0, 1.0], s_obs: [1.0, 1.5f64.ln()] }
    }
}

impl NormalMeanSdModel {
    pub fn new(n_obs: usize, prior_mean: [f64; 2], prior_sd: [f64; 2], s_obs: [f64; 2]) -> Result<Self> {
        if n_obs < 2 {
            return Err(AbcError::Config("n_obs must be at least 2 for a sample sd".into()));
        }
        if prior_sd.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(AbcError::Config("prior sds must be positive and finite".into()));
        }
        if prior_mean.iter().chain(&s_obs).any(|v| !v.is_finite()) {
            return Err(AbcError::Config("prior means and s_obs must be finite".into()));
        }
        Ok(Self { n_obs, prior_mean, prior_sd, s_obs })
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        (0..2)
            .map(|k| Normal::new(self.prior_mean[k], self.prior_sd[k]).expect("validated").ln_pdf(theta[k]))
            .sum()
    }

    /// Joint density of the summary at `s` given θ. The sample mean and the
    /// sample variance are independent; (n − 1)S²/σ² is chi-square.
    pub fn summary_density(&self, theta: &[f64], s: [f64; 2]) -> f64 {
        let n = self.n_obs as f64;
        let k = n - 1.0;
        let sigma = theta[1].exp();
        let z = (s[0] - theta[0]) * n.sqrt() / sigma;
        let log_mean = -0.5 * z * z - (sigma / n.sqrt()).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let x = k * (2.0 * (s[1] - theta[1])).exp();
        let log_chi = (0.5 * k - 1.0) * x.ln() - 0.5 * x - 0.5 * k * 2f64.ln() - ln_gamma(0.5 * k);
        (log_mean + log_chi + (2.0 * x).ln()).exp()
    }

    /// `∫ K_h(‖s − s_obs‖) p(s | θ) ds` in polar coordinates about `s_obs`.
    pub fn abc_likelihood(&self, theta: &[f64], kernel: &SmoothingKernel) -> Result<f64> {
        if kernel.is_infinite() {
            return Err(AbcError::InvalidInput("quadrature needs a finite tolerance".into()));
        }
        let h = kernel.scale();
        let reach = if kernel.compact_support() { h } else { 8.0 * h };
        let n = self.n_obs as f64;
        let scale = (theta[1].exp() / n.sqrt()).min(1.0 / (2.0 * (n - 1.0)).sqrt()).min(h);
        let n_r = (reach / scale * 30.0).ceil().clamp(64.0, 4000.0) as usize;
        let n_phi = (2.0 * std::f64::consts::PI * reach / scale * 30.0).ceil().clamp(64.0, 4000.0) as usize;
        let ring = |r: f64| -> f64 {
            if r == 0.0 {
                return 0.0;
            }
            let step = 2.0 * std::f64::consts::PI / n_phi as f64;
            let around: f64 = (0..n_phi)
                .map(|j| {
                    let phi = j as f64 * step;
                    self.summary_density(theta, [self.s_obs[0] + r * phi.cos(), self.s_obs[1] + r * phi.sin()])
                })
                .sum();
            kernel.eval_unchecked(r) * r * around * step
        };
        Ok(simpson(ring, 0.0, reach, n_r))
    }
}

impl GenerativeModel for NormalMeanSdModel {
    fn name(&self) -> &str {
        "normal_mean_sd"
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn summary_dim(&self) -> usize {
        2
    }

    fn sample_prior(&self, rng: &mut StreamRng) -> ParamVector {
        let values = (0..2)
            .map(|k| NormalDist::new(self.prior_mean[k], self.prior_sd[k]).expect("validated").sample(rng))
            .collect();
        ParamVector::from_vec_unchecked(values)
    }

    fn prior_density(&self, theta: &ParamVector) -> f64 {
        self.log_prior(theta).exp()
    }

    fn simulate_summary(&self, theta: &ParamVector, rng: &mut StreamRng) -> Result<SummaryVector> {
        let n = self.n_obs as f64;
        let sigma = theta[1].exp();
        let mean = NormalDist::new(theta[0], sigma / n.sqrt())
            .map_err(|e| AbcError::InvalidInput(e.to_string()))?
            .sample(rng);
        let chi: f64 = ChiSquared::new(n - 1.0).expect("n >= 2").sample(rng);
        let log_sd = theta[1] + 0.5 * (chi / (n - 1.0)).ln();
        SummaryVector::new(vec![mean, log_sd])
    }

    fn observed_summary(&self) -> Option<SummaryVector> {
        Some(SummaryVector::from_vec_unchecked(self.s_obs.to_vec()))
    }
}

/// A normalised 2-D density on a product grid, row-major in the first axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedDensity2d {
    pub axes: [GridSpec; 2],
    pub density: Vec<f64>,
}

impl GriddedDensity2d {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.density[i * self.axes[1].nodes + j]
    }

    /// Marginal density of coordinate `k`.
    pub fn marginal(&self, k: usize) -> Result<GriddedDensity> {
        let (na, nb) = (self.axes[0].nodes, self.axes[1].nodes);
        let values = if k == 0 {
            (0..na).map(|i| (0..nb).map(|j| self.at(i, j)).sum::<f64>()).collect()
        } else {
            (0..nb).map(|j| (0..na).map(|i| self.at(i, j)).sum::<f64>()).collect()
        };
        GriddedDensity::from_unnormalised(self.axes[k], values)
    }
}

/// Tabulate `π_ABC(θ | s_obs)` of the two-parameter fixture on a product grid.
pub fn abc_posterior_quadrature_2d(
    model: &NormalMeanSdModel,
    kernel: &SmoothingKernel,
    axes: [GridSpec; 2],
) -> Result<GriddedDensity2d> {
    use rayon::prelude::*;
    let (a, b) = (axes[0].points(), axes[1].points());
    let cells: Vec<(f64, f64)> = a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).collect();
    let values: Result<Vec<f64>> = cells
        .into_par_iter()
        .map(|(x, y)| Ok(model.log_prior(&[x, y]).exp() * model.abc_likelihood(&[x, y], kernel)?))
        .collect();
    let values = values?;
    let total: f64 = values.iter().sum::<f64>() * axes[0].step() * axes[1].step();
    if !(total > 0.0) {
        return Err(AbcError::OracleResolution("no mass on the grid".into()));
    }
    Ok(GriddedDensity2d { axes, density: values.iter().map(|v| v / total).collect() })
}
