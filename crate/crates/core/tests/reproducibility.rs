//! Outputs depend on the seed only, not on the number of worker threads.

mod common;

use common::*;
use likefree_core::importance::{
    early_rejection_importance_sample, importance_rejection_sample, importance_sample, knn_importance_sample,
    rejection_control_sample, ImportanceConfig, KnnConfig, RejectionControlConfig, ThresholdRule,
};
use likefree_core::mcmc::{abc_mcmc, McmcConfig};
use likefree_core::rejection::{rejection_sample, rejection_sample_auto_h, AutoHConfig, RejectionConfig};
use likefree_core::smc::{adaptive_smc, sis_rejection_control, SisConfig, SmcConfig};
use likefree_core::{GaussianRandomWalk, KernelFamily, NormalProposal, RunStatistics};

fn on_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn untimed(mut stats: RunStatistics) -> RunStatistics {
    stats.wall_time = 0.0;
    stats
}

/// Run `f` on one and on four threads and compare.
fn same_on_any_pool<T: PartialEq + std::fmt::Debug + Send>(f: impl Fn() -> T + Send + Sync) {
    let one = on_threads(1, &f);
    let four = on_threads(4, &f);
    assert_eq!(one, four);
}

#[test]
fn rejection_samplers() {
    let p = problem();
    let h = 0.3;
    same_on_any_pool(|| {
        let mut out = rejection_sample(&p, &prior(&p), &RejectionConfig::new(300, kernel(KernelFamily::Epanechnikov, h)), 1).unwrap();
        out.stats = untimed(out.stats);
        out
    });
    same_on_any_pool(|| {
        let cfg = AutoHConfig { n: 100, budget: 5000, family: KernelFamily::Uniform, ratio_bound: None };
        let mut out = rejection_sample_auto_h(&p, &prior(&p), &cfg, 2).unwrap();
        out.samples.stats = untimed(out.samples.stats);
        out
    });
}

#[test]
fn importance_samplers() {
    let p = problem();
    let k = kernel(KernelFamily::Gaussian, 0.2);
    let g = NormalProposal::diagonal(vec![1.0], &[15.0]).unwrap();
    let mut cfg = ImportanceConfig::new(400, k);
    cfg.t = 3;
    same_on_any_pool(|| {
        let mut out = importance_sample(&p, &g, &cfg, 3).unwrap();
        out.stats = untimed(out.stats);
        out
    });
    same_on_any_pool(|| {
        let mut out = importance_rejection_sample(&p, &g, &cfg, 4).unwrap();
        out.stats = untimed(out.stats);
        out
    });
    same_on_any_pool(|| {
        let mut out = early_rejection_importance_sample(&p, &g, &cfg, 5).unwrap();
        out.stats = untimed(out.stats);
        out
    });
    same_on_any_pool(|| {
        let rc = RejectionControlConfig { base: cfg.clone(), threshold: ThresholdRule::Quantile(0.5) };
        let mut out = rejection_control_sample(&p, &g, &rc, 6).unwrap();
        out.stats = untimed(out.stats);
        out
    });
    same_on_any_pool(|| {
        let knn = KnnConfig { n: 100, budget: 3000, family: KernelFamily::Uniform };
        let mut out = knn_importance_sample(&p, &g, &knn, 7).unwrap();
        out.stats = untimed(out.stats);
        out
    });
}

#[test]
fn chain_with_parallel_replicates() {
    let p = problem();
    let mut cfg = McmcConfig::new(kernel(KernelFamily::Gaussian, 0.2), 2000);
    cfg.t = 8;
    let walk = GaussianRandomWalk::isotropic(1, 0.4).unwrap();
    same_on_any_pool(|| abc_mcmc(&p, &walk, &cfg, 8).unwrap());
}

#[test]
fn population_samplers() {
    let p = problem();
    let sd = posterior_sd();
    let schedule = vec![f64::INFINITY, 2.0 * sd, sd];
    same_on_any_pool(|| {
        let mut out = sis_rejection_control(&p, &prior(&p), &SisConfig::new(500, KernelFamily::Gaussian, schedule.clone()), 9).unwrap();
        out.stats = untimed(out.stats);
        out
    });
    same_on_any_pool(|| {
        let mut cfg = SmcConfig::new(500, KernelFamily::Gaussian, 0.8);
        cfg.t = 2;
        cfg.stop.max_stages = 10;
        let mut out = adaptive_smc(&p, &prior(&p), &cfg, 10).unwrap();
        out.stats = untimed(out.stats);
        out
    });
}
