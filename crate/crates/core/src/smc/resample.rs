use rand::Rng;

use crate::error::{AbcError, Result};
use crate::rng::StreamRng;
use crate::sampling::open_uniform;
use crate::types::ParticlePopulation;
use crate::weights::normalise_weights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResamplingScheme {
    Multinomial,
    #[default]
    Systematic,
}

/// Parent index of each of `n` offspring, in increasing order.
pub fn offspring_indices(weights: &[f64], n: usize, scheme: ResamplingScheme, rng: &mut StreamRng) -> Result<Vec<usize>> {
    let w = normalise_weights(weights).map_err(|_| AbcError::DegeneratePopulation { n: weights.len() })?;
    let mut cumulative = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for x in &w {
        acc += x;
        cumulative.push(acc);
    }
    let last = w.iter().rposition(|x| *x > 0.0).expect("positive total weight");
    let pick = |u: f64| cumulative.partition_point(|c| *c <= u).min(last);
    let mut out: Vec<usize> = match scheme {
        ResamplingScheme::Multinomial => (0..n).map(|_| pick(rng.random::<f64>() * acc)).collect(),
        ResamplingScheme::Systematic => {
            let u0 = open_uniform(rng);
            (0..n).map(|k| pick((k as f64 + u0) / n as f64 * acc)).collect()
        }
    };
    out.sort_unstable();
    Ok(out)
}

/// Draw `N` offspring with their replicate summaries and reset every raw
/// weight to one, so the ESS becomes exactly `N`.
pub fn resample(population: &ParticlePopulation, scheme: ResamplingScheme, rng: &mut StreamRng) -> Result<ParticlePopulation> {
    let n = population.len();
    let idx = offspring_indices(&population.raw_weights(), n, scheme, rng)?;
    let particles = idx
        .into_iter()
        .map(|i| {
            let mut p = population.particles[i].clone();
            p.raw_weight = 1.0;
            p
        })
        .collect();
    let mut out = ParticlePopulation::new(particles, population.tolerance);
    out.normalise()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSource;
    use crate::types::{ParamVector, SummaryVector, WeightedParticle};

    fn population(w: &[f64]) -> ParticlePopulation {
        let particles = w
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                WeightedParticle::new(ParamVector::scalar(i as f64), vec![SummaryVector::scalar(10.0 + i as f64)], w)
            })
            .collect();
        ParticlePopulation::new(particles, 1.0)
    }

    #[test]
    fn single_live_particle_is_copied() {
        let pop = population(&[0.0, 1.0, 0.0, 0.0, 0.0]);
        for scheme in [ResamplingScheme::Multinomial, ResamplingScheme::Systematic] {
            let out = resample(&pop, scheme, &mut SeedSource::new(1).stream(0, 0)).unwrap();
            assert_eq!(out.len(), 5);
            assert!(out.particles.iter().all(|p| p.theta[0] == 1.0 && p.summaries[0][0] == 11.0));
            assert_eq!(out.ess().unwrap(), 5.0);
        }
    }

    #[test]
    fn systematic_equal_weights_one_each() {
        for seed in 0..50 {
            let idx = offspring_indices(&[0.25; 4], 4, ResamplingScheme::Systematic, &mut SeedSource::new(seed).stream(0, 0)).unwrap();
            assert_eq!(idx, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn resampled_ess_is_n() {
        let pop = population(&[0.1, 3.0, 0.5, 0.0, 2.2, 1.0]);
        let out = resample(&pop, ResamplingScheme::Systematic, &mut SeedSource::new(3).stream(0, 0)).unwrap();
        assert_eq!(out.ess().unwrap(), 6.0);
        assert!(out.particles.iter().all(|p| p.theta[0] != 3.0));
    }

    #[test]
    fn degenerate_population_errors() {
        let pop = population(&[0.0, 0.0]);
        let r = resample(&pop, ResamplingScheme::Multinomial, &mut SeedSource::new(3).stream(0, 0));
        assert_eq!(r, Err(AbcError::DegeneratePopulation { n: 2 }));
    }

    #[test]
    fn offspring_counts_are_unbiased() {
        let w = [0.05, 0.3, 0.15, 0.0, 0.4, 0.1];
        let n = w.len();
        let trials = 10_000;
        for scheme in [ResamplingScheme::Multinomial, ResamplingScheme::Systematic] {
            let seeds = SeedSource::new(17);
            let mut sum = vec![0.0; n];
            let mut sq = vec![0.0; n];
            for k in 0..trials {
                let idx = offspring_indices(&w, n, scheme, &mut seeds.stream(0, k)).unwrap();
                let mut counts = vec![0.0; n];
                for i in idx {
                    counts[i] += 1.0;
                }
                for i in 0..n {
                    sum[i] += counts[i];
                    sq[i] += counts[i] * counts[i];
                }
            }
            for i in 0..n {
                let mean = sum[i] / trials as f64;
                let var = sq[i] / trials as f64 - mean * mean;
                let se = (var / trials as f64).sqrt();
                let expected = n as f64 * w[i];
                assert!((mean - expected).abs() <= 3.0 * se.max(1e-12), "{scheme:?} particle {i}: {mean} vs {expected}");
            }
        }
    }
}
