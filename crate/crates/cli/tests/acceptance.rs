//! End-to-end acceptance checks. Run with `cargo test --test acceptance`.
//!
//! Prints one `PASS`/`FAIL` line per criterion (`WARN` for soft ones) and
//! exits non-zero when a hard criterion fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use likefree_core::diagnostics::{
    autocorrelation_ess, batch_means_se, bootstrap_mean_se, ks_distance, ks_distance_cdf, sojourn_times,
    weighted_quantile_values, WeightedSample,
};
use likefree_core::importance::{
    importance_rejection_sample, importance_sample, knn_importance_sample, rejection_control_sample, ImportanceConfig,
    KnnConfig, RejectionControlConfig, ThresholdRule,
};
use likefree_core::mcmc::{abc_mcmc, abc_mcmc_method2, abc_mcmc_method3, McmcConfig};
use likefree_core::models::{abc_posterior_quadrature, exact_posterior, NormalMeanModel, StateJump, ThreeStateModel};
use likefree_core::rejection::{rejection_sample, rejection_sample_auto_h, AutoHConfig, RejectionConfig};
use likefree_core::smc::{adaptive_smc, sis_rejection_control, SisConfig, SmcConfig, StopReason};
use likefree_core::{
    effective_sample_size, ess_from_raw, ChainTrace, DistanceMetric, GaussianRandomWalk, KernelFamily, NormalProposal,
    PriorProposal, Problem, SmoothingKernel,
};
use statrs::distribution::{ContinuousCDF, Normal};

const BIN: &str = env!("CARGO_BIN_EXE_likefree");

type Check = Result<(bool, String), String>;

#[derive(Default)]
struct Tally {
    hard_failures: usize,
}

impl Tally {
    fn run(&mut self, id: u32, name: &str, soft: bool, check: impl FnOnce() -> Check) {
        let start = Instant::now();
        let (ok, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        let status = match (ok, soft) {
            (true, _) => "PASS",
            (false, true) => "WARN",
            (false, false) => "FAIL",
        };
        if !ok && !soft {
            self.hard_failures += 1;
        }
        println!("{status} criterion {id:>2} ({name}, {:.1}s): {detail}", start.elapsed().as_secs_f64());
    }
}

fn fixture() -> NormalMeanModel {
    NormalMeanModel::default()
}

fn problem() -> Problem {
    Problem::from_model(Arc::new(fixture()), DistanceMetric::Euclidean).unwrap()
}

fn prior(p: &Problem) -> PriorProposal {
    PriorProposal::new(p.model_arc())
}

fn post_sd() -> f64 {
    exact_posterior(&fixture()).1
}

fn kernel(family: KernelFamily, h: f64) -> SmoothingKernel {
    SmoothingKernel::new(family, h).unwrap()
}

fn walk(sd: f64) -> GaussianRandomWalk {
    GaussianRandomWalk::isotropic(1, sd).unwrap()
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// A sample to be compared with the ABC posterior at `h`.
struct Recovery {
    label: &'static str,
    sample: WeightedSample,
    se: f64,
    ess: f64,
    family: KernelFamily,
    h: f64,
}

impl Recovery {
    fn weighted(label: &'static str, values: Vec<f64>, raw: Vec<f64>, family: KernelFamily, h: f64, seed: u64) -> Result<Self, String> {
        let ess = ess_from_raw(&raw).map_err(err)?;
        let sample = WeightedSample::new(values, raw).map_err(err)?;
        let se = bootstrap_mean_se(&sample, 500, seed);
        Ok(Self { label, sample, se, ess, family, h })
    }

    fn chain(label: &'static str, trace: &ChainTrace, burn: usize, family: KernelFamily, h: f64) -> Self {
        let xs = trace.coordinate_after(0, burn);
        let ess = autocorrelation_ess(&xs);
        let se = batch_means_se(&xs, 50);
        Self { label, sample: WeightedSample::unweighted(xs), se, ess, family, h }
    }

    /// Mean within 3 SE and KS < 0.05 with at least 2000 effective samples.
    fn check(&self) -> (bool, String) {
        let oracle = abc_posterior_quadrature(&fixture(), &kernel(self.family, self.h), None).unwrap();
        let z = (self.sample.mean() - oracle.mean()) / self.se;
        let ks = ks_distance_cdf(&self.sample, |x| oracle.cdf(x));
        let ok = z.abs() < 3.0 && ks < 0.05 && self.ess >= 2000.0;
        (ok, format!("{} z={z:+.2} ks={ks:.4} ess={:.0}", self.label, self.ess))
    }
}

fn first_coordinate(pop: &likefree_core::ParticlePopulation) -> (Vec<f64>, Vec<f64>) {
    (pop.particles.iter().map(|q| q.theta[0]).collect(), pop.raw_weights())
}

fn criterion_1() -> Check {
    let n = 1000;
    let equal = effective_sample_size(&vec![1.0 / n as f64; n]).map_err(err)?;
    let raw_equal = ess_from_raw(&vec![3.7; n]).map_err(err)?;
    let mut one_hot = vec![0.0; n];
    one_hot[417] = 1.0;
    let single = effective_sample_size(&one_hot).map_err(err)?;
    let raw_single = ess_from_raw(&one_hot.iter().map(|w| w * 2.5).collect::<Vec<_>>()).map_err(err)?;
    let ok = equal == n as f64 && raw_equal == n as f64 && single == 1.0 && raw_single == 1.0;
    Ok((ok, format!("equal -> {equal}, {raw_equal}; one-hot -> {single}, {raw_single}")))
}

fn criterion_2() -> Check {
    let p = problem();
    let sd = post_sd();
    let gauss = KernelFamily::Gaussian;
    let h = 0.5 * sd;
    let mut runs = Vec::new();

    let k = kernel(KernelFamily::Uniform, h);
    let rej = rejection_sample(&p, &prior(&p), &RejectionConfig::new(3000, k), 101).map_err(err)?;
    let xs: Vec<f64> = rej.samples.iter().map(|s| s[0]).collect();
    let ones = vec![1.0; xs.len()];
    runs.push(Recovery::weighted("rejection", xs, ones, KernelFamily::Uniform, h, 1)?);

    let g = NormalProposal::diagonal(vec![1.0], &[1.0]).map_err(err)?;
    let hybrid = importance_rejection_sample(&p, &g, &ImportanceConfig::new(3000, kernel(gauss, h)), 102).map_err(err)?;
    let (xs, w) = first_coordinate(&hybrid.population);
    runs.push(Recovery::weighted("hybrid", xs, w, gauss, h, 2)?);

    let rc_cfg = RejectionControlConfig { base: ImportanceConfig::new(6000, kernel(gauss, h)), threshold: ThresholdRule::Quantile(0.5) };
    let rc = rejection_control_sample(&p, &g, &rc_cfg, 103).map_err(err)?;
    let (xs, w) = first_coordinate(&rc.population);
    runs.push(Recovery::weighted("rejection-control", xs, w, gauss, h, 3)?);

    for (label, t, iterations) in [("mcmc T=1", 1, 100_000), ("mcmc T=10", 10, 60_000)] {
        let mut cfg = McmcConfig::new(kernel(gauss, h), iterations);
        cfg.t = t;
        let trace = abc_mcmc(&p, &walk(0.5), &cfg, 104 + t as u64).map_err(err)?;
        runs.push(Recovery::chain(label, &trace, 2000, gauss, h));
    }

    let schedule: Vec<f64> = [f64::INFINITY, 4.0, 2.0, 1.0, 0.5].iter().map(|c| c * sd).collect();
    let sis = sis_rejection_control(&p, &prior(&p), &SisConfig::new(6000, gauss, schedule), 105).map_err(err)?;
    let (xs, w) = first_coordinate(&sis.population);
    runs.push(Recovery::weighted("sis", xs, w, gauss, sis.population.tolerance, 5)?);

    let mut smc_cfg = SmcConfig::new(5000, gauss, 0.9);
    smc_cfg.moves_per_stage = 10;
    let smc = adaptive_smc(&p, &prior(&p), &smc_cfg, 106).map_err(err)?;
    let (xs, w) = first_coordinate(&smc.population);
    runs.push(Recovery::weighted("adaptive-smc", xs, w, gauss, smc.population.tolerance, 6)?);

    let results: Vec<(bool, String)> = runs.iter().map(Recovery::check).collect();
    let ok = results.iter().all(|r| r.0);
    Ok((ok, results.into_iter().map(|r| r.1).collect::<Vec<_>>().join("; ")))
}

fn criterion_3() -> Check {
    let p = problem();
    let (mean, sd) = exact_posterior(&fixture());
    let h = 0.01 * sd;
    let mut cfg = RejectionConfig::new(2000, kernel(KernelFamily::Uniform, h));
    cfg.max_attempts = 100_000_000;
    let out = rejection_sample(&p, &prior(&p), &cfg, 301).map_err(err)?;
    let exact = Normal::new(mean, sd).map_err(err)?;
    let sample = WeightedSample::unweighted(out.samples.iter().map(|s| s[0]).collect());
    let ks = ks_distance_cdf(&sample, |x| exact.cdf(x));
    Ok((ks < 0.05, format!("h={h:.5} ks={ks:.4} over {} draws, {} simulator calls", out.samples.len(), out.stats.simulator_calls)))
}

fn variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn criterion_4() -> Check {
    let p = problem();
    let g = NormalProposal::diagonal(vec![0.0], &[5.0]).map_err(err)?;
    let k = kernel(KernelFamily::Gaussian, 0.5 * post_sd());
    let mut reduced = 0;
    for seed in 0..20 {
        let base = ImportanceConfig::new(1000, k);
        let plain = importance_sample(&p, &g, &base, 400 + seed).map_err(err)?;
        let rc = rejection_control_sample(&p, &g, &RejectionControlConfig { base, threshold: ThresholdRule::Quantile(0.5) }, 400 + seed)
            .map_err(err)?;
        if variance(&rc.scaled_weights()) <= variance(&plain.population.raw_weights()) {
            reduced += 1;
        }
    }
    Ok((reduced >= 18, format!("Var(w*) <= Var(w) in {reduced} of 20 runs")))
}

fn criterion_5() -> Check {
    let p = problem();
    let mut notes = Vec::new();
    let mut ok = true;

    let knn = knn_importance_sample(&p, &prior(&p), &KnnConfig { n: 500, budget: 10_000, family: KernelFamily::Uniform }, 501)
        .map_err(err)?;
    let hybrid =
        importance_rejection_sample(&p, &prior(&p), &ImportanceConfig::new(500, kernel(KernelFamily::Uniform, knn.h)), 501)
            .map_err(err)?;
    // Uniform weights: k-NN carries K_h(d) π/g, the hybrid π/g after an accept-with-probability-one test.
    let k0 = kernel(KernelFamily::Uniform, knn.h).at_zero().map_err(err)?;
    let bits = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let same = knn.population.particles.len() == hybrid.population.particles.len()
        && knn.population.particles.iter().zip(&hybrid.population.particles).all(|(a, b)| {
            bits(a.theta.as_slice()) == bits(b.theta.as_slice())
                && a.summaries.iter().zip(&b.summaries).all(|(x, y)| bits(x.as_slice()) == bits(y.as_slice()))
                && a.raw_weight.to_bits() == (k0 * b.raw_weight).to_bits()
        });
    ok &= same;
    notes.push(format!("k-NN vs hybrid at h={:.5}: {}", knn.h, if same { "identical" } else { "differ" }));

    let g = NormalProposal::diagonal(vec![1.0], &[20.0]).map_err(err)?;
    for family in [KernelFamily::Uniform, KernelFamily::Epanechnikov, KernelFamily::Triangular] {
        let auto = rejection_sample_auto_h(&p, &g, &AutoHConfig { n: 300, budget: 6000, family, ratio_bound: Some(3.0) }, 502)
            .map_err(err)?;
        let k = kernel(family, auto.h);
        let mut cfg = RejectionConfig::new(300, k);
        cfg.bound = Some(k.at_zero().map_err(err)? * 3.0);
        let fixed = rejection_sample(&p, &g, &cfg, 502).map_err(err)?;
        let same = auto.samples.samples == fixed.samples && auto.samples.attempt_index == fixed.attempt_index;
        ok &= same;
        notes.push(format!("auto-h {family:?}: {}", if same { "identical" } else { "differ" }));
    }
    Ok((ok, notes.join("; ")))
}

fn criterion_6() -> Check {
    let p = problem();
    let k = kernel(KernelFamily::Uniform, 0.5 * post_sd());
    let mut samples = Vec::new();
    let mut notes = Vec::new();
    for (t, iterations) in [(1, 300_000), (10, 100_000)] {
        let mut cfg = McmcConfig::new(k, iterations);
        cfg.t = t;
        let trace = abc_mcmc(&p, &walk(0.5), &cfg, 600 + t as u64).map_err(err)?;
        let xs = trace.coordinate_after(0, 5000);
        let ess = autocorrelation_ess(&xs);
        notes.push(format!("T={t} ess={ess:.0}"));
        samples.push((WeightedSample::unweighted(xs), ess));
    }
    let ks = ks_distance(&samples[0].0, &samples[1].0);
    let ok = ks < 0.05 && samples.iter().all(|s| s.1 >= 1000.0);
    Ok((ok, format!("{} ks={ks:.4}", notes.join(" "))))
}

fn criterion_7() -> Check {
    let model = ThreeStateModel::default();
    let p = Problem::from_model(Arc::new(model.clone()), DistanceMetric::Euclidean).map_err(err)?;
    let k = kernel(KernelFamily::Triangular, 1.5);
    let n = 1_000_000;
    let trace = abc_mcmc(&p, &StateJump, &McmcConfig::new(k, n), 701).map_err(err)?;
    let exact = model.exact_flows(&k);
    let states: Vec<usize> = trace.states.iter().map(|s| s.theta[0] as usize).collect();
    let mut ok = true;
    let mut notes = Vec::new();
    for a in 0..3 {
        for b in (a + 1)..3 {
            let step = |x: &[usize], from: usize, to: usize| f64::from(u8::from(x[0] == from && x[1] == to));
            let diff: Vec<f64> = states.windows(2).map(|w| step(w, a, b) - step(w, b, a)).collect();
            let forward: Vec<f64> = states.windows(2).map(|w| step(w, a, b)).collect();
            let net = diff.iter().sum::<f64>() / n as f64;
            let se = batch_means_se(&diff, 100);
            let fab = forward.iter().sum::<f64>() / n as f64;
            let fse = batch_means_se(&forward, 100);
            let balanced = net.abs() < 3.0 * se;
            let matches = (fab - exact[a][b]).abs() < 3.0 * fse;
            ok &= balanced && matches;
            notes.push(format!(
                "{a}<->{b}: net {:+.2} SE, flow {fab:.5} vs exact {:.5} ({:+.2} SE)",
                net / se,
                exact[a][b],
                (fab - exact[a][b]) / fse
            ));
        }
    }
    Ok((ok, notes.join("; ")))
}

fn criterion_8() -> Check {
    let p = problem();
    let n = 1000;
    let out = adaptive_smc(&p, &prior(&p), &SmcConfig::new(n, KernelFamily::Gaussian, 0.9), 801).map_err(err)?;
    let mut worst = 0.0f64;
    let mut monotone = true;
    let mut resampled_exact = true;
    let mut resamples = 0;
    for w in out.stages.windows(2) {
        let target = 0.9 * w[0].ess_after;
        worst = worst.max((w[1].ess_before - target).abs() / target);
        monotone &= w[1].h <= w[0].h;
    }
    for s in out.stages.iter().filter(|s| s.resampled) {
        resamples += 1;
        resampled_exact &= s.ess_after == n as f64;
    }
    let last = out.stages.last().ok_or("no stages")?;
    let stopped = out.stop == StopReason::MoveRate && last.move_rate < 0.015;
    let ok = worst <= 1e-6 && monotone && resampled_exact && resamples > 0 && stopped;
    Ok((
        ok,
        format!(
            "{} stages, max relative ESS error {worst:.2e}, {resamples} resamples with ESS = N: {resampled_exact}, \
             h non-increasing: {monotone}, stop {:?} at move rate {:.4}, final h {:.5}",
            out.stages.len(),
            out.stop,
            last.move_rate,
            last.h
        ),
    ))
}

fn criterion_9() -> Check {
    let p = problem();
    let mut cfg = McmcConfig::new(kernel(KernelFamily::Uniform, 0.2), 60_000);
    cfg.t = 5;
    let burn = 5000;
    let stats = |trace: &ChainTrace| {
        let xs = trace.coordinate_after(0, burn);
        (xs.iter().sum::<f64>() / xs.len() as f64, batch_means_se(&xs, 50))
    };
    let m1 = stats(&abc_mcmc(&p, &walk(0.5), &cfg, 901).map_err(err)?);
    let m2 = stats(&abc_mcmc_method2(&p, &walk(0.5), &cfg, 902).map_err(err)?);
    let trace3 = abc_mcmc_method3(&p, &walk(0.5), &cfg, 1_000_000, 903).map_err(err)?;
    let m3 = stats(&trace3);
    let means = [m1, m2, m3];
    let mut ok = true;
    let mut zs = Vec::new();
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let z = (means[i].0 - means[j].0) / (means[i].1.powi(2) + means[j].1.powi(2)).sqrt();
        ok &= z.abs() < 3.0;
        zs.push(format!("{}-{}: {z:+.2}", i + 1, j + 1));
    }
    let calls = trace3.calls_per_iteration();
    let mean_calls = calls.iter().sum::<u64>() as f64 / calls.len() as f64;
    let max_calls = calls.iter().max().copied().unwrap_or(0);
    let mut sorted = calls.clone();
    sorted.sort_unstable();
    let median = sorted[sorted.len() / 2];
    Ok((
        ok,
        format!(
            "means {:.4} {:.4} {:.4}, pairwise z {}; method 3 calls/iteration mean {mean_calls:.2}, median {median}, max {max_calls}",
            m1.0,
            m2.0,
            m3.0,
            zs.join(", ")
        ),
    ))
}

fn run_binary(config: &Path, out: &Path, workers: usize) -> Result<Vec<u8>, String> {
    let status = Command::new(BIN)
        .args(["--quiet", "--workers", &workers.to_string(), "--output-dir"])
        .arg(out)
        .arg("run")
        .arg(config)
        .output()
        .map_err(err)?;
    if !status.status.success() {
        return Err(format!("{} exited with {:?}: {}", config.display(), status.status.code(), String::from_utf8_lossy(&status.stderr)));
    }
    fs::read(out.join("samples.csv")).map_err(err)
}

fn criterion_10() -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut names: Vec<_> = fs::read_dir(&configs)
        .map_err(err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "conf"))
        .collect();
    names.sort();
    let mut differing = Vec::new();
    for (i, config) in names.iter().enumerate() {
        let reference = run_binary(config, &tmp.path().join(format!("{i}-w1")), 1)?;
        for workers in [2, 4] {
            let other = run_binary(config, &tmp.path().join(format!("{i}-w{workers}")), workers)?;
            if other != reference {
                differing.push(format!("{} (--workers {workers})", config.file_name().unwrap().to_string_lossy()));
            }
        }
    }
    let ok = differing.is_empty();
    let detail = if ok {
        format!("{} configurations byte-identical under --workers 1, 2, 4", names.len())
    } else {
        format!("differ: {}", differing.join(", "))
    };
    Ok((ok, detail))
}

/// Mean sojourn above the chain's own 95th percentile.
fn mean_sojourn(trace: &ChainTrace, burn: usize) -> Result<f64, String> {
    let xs = trace.coordinate_after(0, burn);
    let ones = vec![1.0; xs.len()];
    let q95 = weighted_quantile_values(&xs, &ones, 0.95).map_err(err)?;
    let runs = sojourn_times(trace, 0, q95);
    if runs.is_empty() {
        return Err("no excursions above the 95th percentile".into());
    }
    Ok(runs.iter().sum::<usize>() as f64 / runs.len() as f64)
}

fn criterion_11() -> Check {
    let p = problem();
    let iterations = 200_000;
    let chain = |family, h: f64, n: usize, seed| abc_mcmc(&p, &walk(0.5), &McmcConfig::new(kernel(family, h), n), seed).map_err(err);
    let h_gauss = 0.5 * post_sd();
    let gauss = chain(KernelFamily::Gaussian, h_gauss, iterations, 1101)?;
    let target = gauss.acceptance_rate();

    // Acceptance rises with h; bisect the uniform scale on shorter chains.
    let (mut lo, mut hi) = (0.1 * h_gauss, 10.0 * h_gauss);
    for _ in 0..12 {
        let mid = (lo * hi).sqrt();
        if chain(KernelFamily::Uniform, mid, 30_000, 1102)?.acceptance_rate() < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h_unif = (lo * hi).sqrt();
    let unif = chain(KernelFamily::Uniform, h_unif, iterations, 1103)?;
    let (su, sg) = (mean_sojourn(&unif, 5000)?, mean_sojourn(&gauss, 5000)?);
    Ok((
        su > sg,
        format!(
            "acceptance uniform {:.4} (h={h_unif:.4}) vs gaussian {:.4} (h={h_gauss:.4}); mean sojourn above q95 uniform {su:.2} vs gaussian {sg:.2}",
            unif.acceptance_rate(),
            target
        ),
    ))
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut tally = Tally::default();
    tally.run(1, "ESS identities", false, criterion_1);
    tally.run(2, "oracle posterior recovery", false, criterion_2);
    tally.run(3, "small-h rejection vs exact posterior", false, criterion_3);
    tally.run(4, "rejection-control variance reduction", false, criterion_4);
    tally.run(5, "k-NN and auto-h equivalence", false, criterion_5);
    tally.run(6, "marginal invariance in T", false, criterion_6);
    tally.run(7, "detailed balance on three states", false, criterion_7);
    tally.run(8, "adaptive SMC schedule", false, criterion_8);
    tally.run(9, "Lee-Lee method consistency", false, criterion_9);
    tally.run(10, "reproducibility across --workers", false, criterion_10);
    tally.run(11, "sojourn times, uniform vs gaussian (soft)", true, criterion_11);
    if tally.hard_failures == 0 {
        println!("acceptance: all hard criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} hard criteria failed", tally.hard_failures);
        ExitCode::FAILURE
    }
}
