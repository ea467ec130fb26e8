//! Weighted-sample summaries, efficiency metrics and oracle comparisons.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{AbcError, Result};
use crate::mcmc::ChainTrace;
use crate::rng::SeedSource;
use crate::types::{ParamVector, ParticlePopulation};
use crate::weights::normalise_weights;

/// Cost and efficiency figures reported by every sampler.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunStatistics {
    pub simulator_calls: u64,
    pub acceptance_rate: f64,
    /// Seconds. Not reproducible.
    pub wall_time: f64,
    pub ess_final: f64,
}

/// ESS gained per simulator call.
pub fn ess_per_simulator_call(stats: &RunStatistics) -> Result<f64> {
    if stats.simulator_calls == 0 {
        return Err(AbcError::InvalidInput("no simulator calls recorded".into()));
    }
    if !(stats.ess_final >= 1.0) {
        return Err(AbcError::DegeneratePopulation { n: 0 });
    }
    Ok(stats.ess_final / stats.simulator_calls as f64)
}

/// Self-normalised weighted mean and covariance of points with raw weights.
///
/// The covariance carries the `1 / (1 − Σ Wᵢ²)` correction, which reduces to
/// the usual `1 / (N − 1)` for equal weights. It is zero when a single point
/// holds all the weight.
pub fn weighted_moments_of(points: &[&[f64]], raw: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if points.len() != raw.len() || points.is_empty() {
        return Err(AbcError::InvalidInput("points and weights must be nonempty and aligned".into()));
    }
    let w = normalise_weights(raw)?;
    let d = points[0].len();
    let mut mean = DVector::zeros(d);
    for (p, wi) in points.iter().zip(&w) {
        for k in 0..d {
            mean[k] += wi * p[k];
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for (p, wi) in points.iter().zip(&w) {
        for a in 0..d {
            let da = p[a] - mean[a];
            for b in 0..d {
                cov[(a, b)] += wi * da * (p[b] - mean[b]);
            }
        }
    }
    let sum_sq: f64 = w.iter().map(|x| x * x).sum();
    let denom = 1.0 - sum_sq;
    if denom > 1e-15 {
        cov /= denom;
    } else {
        cov.fill(0.0);
    }
    Ok((mean, cov))
}

pub fn weighted_moments(population: &ParticlePopulation) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let points: Vec<&[f64]> = population.particles.iter().map(|p| p.theta.as_slice()).collect();
    weighted_moments_of(&points, &population.raw_weights())
}

/// Unweighted moments of a plain sample.
pub fn sample_moments(sample: &[ParamVector]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let points: Vec<&[f64]> = sample.iter().map(|p| p.as_slice()).collect();
    weighted_moments_of(&points, &vec![1.0; sample.len()])
}

/// Left-continuous inverse of the weighted CDF: the smallest value `x` with
/// `F(x) >= p`.
pub fn weighted_quantile_values(values: &[f64], raw: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(AbcError::InvalidInput(format!("quantile level must lie in (0,1), got {p}")));
    }
    if values.len() != raw.len() {
        return Err(AbcError::InvalidInput("values and weights must be aligned".into()));
    }
    normalise_weights(raw)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = raw.iter().sum();
    let target = p * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    for &i in &order {
        cum += raw[i];
        if cum >= target {
            return Ok(values[i]);
        }
    }
    Ok(values[*order.last().expect("nonempty")])
}

pub fn weighted_quantile(population: &ParticlePopulation, coordinate: usize, p: f64) -> Result<f64> {
    weighted_quantile_values(&population.coordinate(coordinate), &population.raw_weights(), p)
}

/// Lengths of maximal runs of consecutive values strictly above `threshold`.
pub fn run_lengths_above(values: &[f64], threshold: f64) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = 0;
    for &v in values {
        if v > threshold {
            current += 1;
        } else if current > 0 {
            runs.push(current);
            current = 0;
        }
    }
    if current > 0 {
        runs.push(current);
    }
    runs
}

/// Sojourn times of a chain coordinate above `threshold`.
pub fn sojourn_times(trace: &ChainTrace, coordinate: usize, threshold: f64) -> Vec<usize> {
    run_lengths_above(&trace.coordinate(coordinate), threshold)
}

/// A one-dimensional weighted sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedSample {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != weights.len() {
            return Err(AbcError::InvalidInput("weighted sample must be nonempty and aligned".into()));
        }
        normalise_weights(&weights)?;
        Ok(Self { values, weights })
    }

    pub fn unweighted(values: Vec<f64>) -> Self {
        let weights = vec![1.0; values.len()];
        Self { values, weights }
    }

    pub fn from_population(population: &ParticlePopulation, coordinate: usize) -> Result<Self> {
        Self::new(population.coordinate(coordinate), population.raw_weights())
    }

    /// Sorted `(value, normalised weight)` pairs with ties merged.
    fn jumps(&self) -> Vec<(f64, f64)> {
        let total: f64 = self.weights.iter().sum();
        let mut pairs: Vec<(f64, f64)> = self
            .values
            .iter()
            .zip(&self.weights)
            .map(|(&v, &w)| (v, w / total))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (v, w) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += w,
                _ => merged.push((v, w)),
            }
        }
        merged
    }

    pub fn mean(&self) -> f64 {
        let total: f64 = self.weights.iter().sum();
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum::<f64>() / total
    }
}

/// Sup-norm distance between two weighted empirical CDFs, evaluated exactly
/// at the merged jump points.
pub fn ks_distance(a: &WeightedSample, b: &WeightedSample) -> f64 {
    let (ja, jb) = (a.jumps(), b.jumps());
    let (mut i, mut k) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut sup = 0.0f64;
    while i < ja.len() || k < jb.len() {
        let x = match (ja.get(i), jb.get(k)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => unreachable!(),
        };
        if i < ja.len() && ja[i].0 == x {
            fa += ja[i].1;
            i += 1;
        }
        if k < jb.len() && jb[k].0 == x {
            fb += jb[k].1;
            k += 1;
        }
        sup = sup.max((fa - fb).abs());
    }
    sup.min(1.0)
}

/// Sup-norm distance between a weighted empirical CDF and a continuous CDF.
pub fn ks_distance_cdf(a: &WeightedSample, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut below = 0.0f64;
    let mut sup = 0.0f64;
    for (x, w) in a.jumps() {
        let f = cdf(x);
        let above = below + w;
        sup = sup.max((f - below).abs()).max((above - f).abs());
        below = above;
    }
    sup.min(1.0)
}

/// Asymptotic Kolmogorov p-value for statistic `d` at effective size `n`.
pub fn ks_pvalue(d: f64, n: f64) -> f64 {
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Bootstrap standard error of the self-normalised weighted mean.
pub fn bootstrap_mean_se(sample: &WeightedSample, replicates: usize, seed: u64) -> f64 {
    let n = sample.values.len();
    let mut rng = SeedSource::new(seed).stream(u64::MAX, 0);
    let means: Vec<f64> = (0..replicates)
        .map(|_| {
            let (mut num, mut den) = (0.0, 0.0);
            for _ in 0..n {
                let i = rng.random_range(0..n);
                num += sample.weights[i] * sample.values[i];
                den += sample.weights[i];
            }
            if den > 0.0 {
                num / den
            } else {
                f64::NAN
            }
        })
        .filter(|m| m.is_finite())
        .collect();
    sd(&means)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sd(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)).sqrt()
}

/// Batch-means standard error of the mean of a correlated series.
pub fn batch_means_se(values: &[f64], batches: usize) -> f64 {
    let size = values.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&values[b * size..(b + 1) * size])).collect();
    sd(&means) / (batches as f64).sqrt()
}

/// Effective sample size of a correlated series from its autocorrelations,
/// truncated by Geyer's initial positive sequence.
pub fn autocorrelation_ess(values: &[f64]) -> f64 {
    let n = values.len();
    let m = mean(values);
    let centred: Vec<f64> = values.iter().map(|v| v - m).collect();
    let var = centred.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 1.0;
    }
    let rho = |lag: usize| -> f64 {
        centred[..n - lag].iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * var)
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (n as f64 / tau.max(1.0 / n as f64)).min(n as f64)
}

/// Gelman–Rubin ratio across chains of equal length. Reported, never gated on.
pub fn potential_scale_reduction(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let grand = mean(&means);
    let between = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let within = chains.iter().map(|c| sd(c).powi(2)).sum::<f64>() / m;
    let var_hat = (n - 1.0) / n * within + between / n;
    (var_hat / within).sqrt()
}
