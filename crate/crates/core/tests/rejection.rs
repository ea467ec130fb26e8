mod common;

use common::*;
use likefree_core::diagnostics::{ks_distance_cdf, ks_pvalue, WeightedSample};
use likefree_core::models::exact_posterior;
use likefree_core::rejection::{rejection_sample, rejection_sample_auto_h, AutoHConfig, RejectionConfig};
use likefree_core::{KernelFamily, NormalProposal};
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn conjugate_mean_is_recovered() {
    let p = problem();
    let h = 0.05 * fixture().prior_predictive_sd();
    let cfg = RejectionConfig::new(2000, kernel(KernelFamily::Uniform, h));
    let out = rejection_sample(&p, &prior(&p), &cfg, 11).unwrap();
    let xs: Vec<f64> = out.samples.iter().map(|s| s[0]).collect();
    let (mu, _) = exact_posterior(&fixture());
    let se = (variance(&xs) / xs.len() as f64).sqrt();
    assert!((mean(&xs) - mu).abs() < 3.0 * se, "{} vs {mu}", mean(&xs));
    assert!(out.distances.iter().all(|d| *d <= h));
}

#[test]
fn huge_tolerance_returns_the_prior() {
    let p = problem();
    let m = fixture();
    let cfg = RejectionConfig::new(2000, kernel(KernelFamily::Gaussian, 1e6 * m.prior_predictive_sd()));
    let out = rejection_sample(&p, &prior(&p), &cfg, 2).unwrap();
    let ws = WeightedSample::unweighted(out.samples.iter().map(|s| s[0]).collect());
    let normal = Normal::new(m.prior_mean, m.prior_sd).unwrap();
    let d = ks_distance_cdf(&ws, |x| normal.cdf(x));
    assert!(ks_pvalue(d, 2000.0) > 0.01, "KS {d}");
}

#[test]
fn auto_h_picks_the_nearest_summaries() {
    let p = problem();
    let cfg = AutoHConfig { n: 100, budget: 1000, family: KernelFamily::Uniform, ratio_bound: None };
    let out = rejection_sample_auto_h(&p, &prior(&p), &cfg, 7).unwrap();
    // Oracle: rerun every attempt at a huge scale and sort the distances.
    let all = rejection_sample(&p, &prior(&p), &RejectionConfig::new(1000, kernel(KernelFamily::Uniform, 1e12)), 7).unwrap();
    let mut sorted = all.distances.clone();
    sorted.sort_by(f64::total_cmp);
    assert_eq!(out.h, sorted[99]);
    let mut nearest: Vec<u64> = (0..1000u64).filter(|&j| all.distances[j as usize] <= sorted[99]).collect();
    nearest.truncate(100);
    assert_eq!(out.samples.attempt_index, nearest);
}

#[test]
fn auto_h_equals_fixed_h_run() {
    let p = problem();
    let g = NormalProposal::diagonal(vec![1.0], &[20.0]).unwrap();
    for family in [KernelFamily::Uniform, KernelFamily::Epanechnikov, KernelFamily::Triangular] {
        let cfg = AutoHConfig { n: 150, budget: 3000, family, ratio_bound: Some(3.0) };
        let auto = rejection_sample_auto_h(&p, &g, &cfg, 21).unwrap();
        let k = kernel(family, auto.h);
        let mut fixed_cfg = RejectionConfig::new(150, k);
        fixed_cfg.bound = Some(k.at_zero().unwrap() * 3.0);
        let fixed = rejection_sample(&p, &g, &fixed_cfg, 21).unwrap();
        assert_eq!(auto.samples.samples, fixed.samples, "{family:?}");
        assert_eq!(auto.samples.attempt_index, fixed.attempt_index);
    }
}
