#![allow(dead_code)]

use std::sync::Arc;

use likefree_core::diagnostics::{bootstrap_mean_se, WeightedSample};
use likefree_core::models::{abc_posterior_quadrature, exact_posterior, GriddedDensity, NormalMeanModel};
use likefree_core::{DistanceMetric, KernelFamily, PriorProposal, Problem, SmoothingKernel};

pub fn fixture() -> NormalMeanModel {
    NormalMeanModel::default()
}

pub fn problem() -> Problem {
    Problem::from_model(Arc::new(fixture()), DistanceMetric::Euclidean).unwrap()
}

pub fn prior(problem: &Problem) -> PriorProposal {
    PriorProposal::new(problem.model_arc())
}

pub fn posterior_sd() -> f64 {
    exact_posterior(&fixture()).1
}

pub fn kernel(family: KernelFamily, h: f64) -> SmoothingKernel {
    SmoothingKernel::new(family, h).unwrap()
}

pub fn oracle(family: KernelFamily, h: f64) -> GriddedDensity {
    abc_posterior_quadrature(&fixture(), &kernel(family, h), None).unwrap()
}

/// `(estimate − target) / se`.
pub fn z_score(sample: &WeightedSample, target: f64, seed: u64) -> f64 {
    let se = bootstrap_mean_se(sample, 400, seed);
    (sample.mean() - target) / se
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Spearman rank correlation without tie correction.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (rank, i) in idx.into_iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
