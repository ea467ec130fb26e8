mod common;

use common::*;
use likefree_core::diagnostics::{bootstrap_mean_se, WeightedSample};
use likefree_core::importance::{importance_sample, ImportanceConfig};
use likefree_core::smc::{
    adaptive_smc, move_population, sis_rejection_control, MoveProposal, SisConfig, SmcConfig, SmcOutput, StopReason,
};
use likefree_core::{KernelFamily, NormalProposal, ParticlePopulation};

fn combined_se(a: &WeightedSample, b: &WeightedSample, seed: u64) -> f64 {
    (bootstrap_mean_se(a, 400, seed).powi(2) + bootstrap_mean_se(b, 400, seed + 1).powi(2)).sqrt()
}

fn adaptive_run(n: usize, moves_per_stage: usize, seed: u64) -> SmcOutput {
    let p = problem();
    let mut cfg = SmcConfig::new(n, KernelFamily::Gaussian, 0.9);
    cfg.moves_per_stage = moves_per_stage;
    adaptive_smc(&p, &prior(&p), &cfg, seed).unwrap()
}

fn first_coordinate(pop: &ParticlePopulation) -> WeightedSample {
    WeightedSample::from_population(pop, 0).unwrap()
}

#[test]
fn sis_recovers_the_abc_posterior() {
    let p = problem();
    let sd = posterior_sd();
    let schedule: Vec<f64> = [f64::INFINITY, 2.0, 1.0, 0.5, 0.2].iter().map(|c| c * sd).collect();
    let h_last = schedule[4];
    let out = sis_rejection_control(&p, &prior(&p), &SisConfig::new(2000, KernelFamily::Gaussian, schedule), 21).unwrap();
    assert_eq!(out.stages.len(), 5);
    assert_eq!(out.population.tolerance, h_last);
    let z = z_score(&first_coordinate(&out.population), oracle(KernelFamily::Gaussian, h_last).mean(), 2);
    assert!(z.abs() < 3.0, "z = {z}");
}

#[test]
fn adaptive_smc_recovers_the_abc_posterior() {
    let out = adaptive_run(1000, 10, 31);
    assert_eq!(out.stop, StopReason::MoveRate);
    let h = out.population.tolerance;
    let z = z_score(&first_coordinate(&out.population), oracle(KernelFamily::Gaussian, h).mean(), 3);
    assert!(z.abs() < 3.0, "z = {z} at h = {h}");
}

#[test]
fn schedule_is_monotone_and_ess_follows_alpha() {
    let out = adaptive_run(1000, 1, 7);
    assert_eq!(out.stop, StopReason::MoveRate);
    for w in out.stages.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        assert!(cur.h <= prev.h);
        let target = 0.9 * prev.ess_after;
        assert!((cur.ess_before - target).abs() <= 1e-6 * prev.ess_after, "stage {}: {} vs {target}", cur.stage, cur.ess_before);
        if cur.resampled {
            assert!(cur.ess_before < 500.0);
            assert_eq!(cur.ess_after, 1000.0);
        } else {
            assert_eq!(cur.ess_after, cur.ess_before);
        }
        assert!(cur.simulator_calls >= prev.simulator_calls);
    }
    assert!(out.stages.iter().any(|s| s.resampled));
    assert!(out.stages.last().unwrap().move_rate < 0.015);
}

#[test]
fn moves_leave_the_weighted_mean_unchanged() {
    let p = problem();
    let k = kernel(KernelFamily::Gaussian, 0.5 * posterior_sd());
    let g = NormalProposal::diagonal(vec![1.0], &[1.5]).unwrap();
    let before = importance_sample(&p, &g, &ImportanceConfig::new(4000, k), 11).unwrap().population;
    let moved = move_population(&p, &before, &k, &MoveProposal::default(), 5, 12, 99).unwrap();
    assert!(moved.accepted > 0);
    assert_eq!(moved.population.raw_weights(), before.raw_weights());
    let (a, b) = (first_coordinate(&before), first_coordinate(&moved.population));
    assert!((a.mean() - b.mean()).abs() < 3.0 * combined_se(&a, &b, 13), "{} vs {}", a.mean(), b.mean());
}

#[test]
fn zero_weight_particles_stay_put() {
    let p = problem();
    let k = kernel(KernelFamily::Uniform, 0.3);
    let before = importance_sample(&p, &prior(&p), &ImportanceConfig::new(2000, k), 5).unwrap().population;
    let live = before.particles.iter().filter(|q| q.raw_weight > 0.0).count();
    assert!(live > 0 && live < before.len());
    let out = move_population(&p, &before, &k, &MoveProposal::default(), 3, 6, 1).unwrap();
    assert_eq!(out.tried, 3 * live);
    for (old, new) in before.particles.iter().zip(&out.population.particles) {
        if old.raw_weight == 0.0 {
            assert_eq!(old.theta, new.theta);
            assert_eq!(old.summaries, new.summaries);
        }
    }
}

#[test]
fn sis_and_adaptive_smc_agree_at_the_same_scale() {
    let smc = adaptive_run(1000, 10, 41);
    let h = smc.population.tolerance;
    let p = problem();
    let sd = posterior_sd();
    let schedule = vec![f64::INFINITY, 2.0 * sd, sd, 0.5 * sd, h];
    let sis = sis_rejection_control(&p, &prior(&p), &SisConfig::new(2000, KernelFamily::Gaussian, schedule), 42).unwrap();
    let (a, b) = (first_coordinate(&smc.population), first_coordinate(&sis.population));
    assert!((a.mean() - b.mean()).abs() < 3.0 * combined_se(&a, &b, 43), "{} vs {}", a.mean(), b.mean());
}
