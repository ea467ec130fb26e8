//! Parameter and summary vectors, weighted particles and populations.

use std::ops::Deref;

use crate::error::{AbcError, Result};
use crate::weights;

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(AbcError::InvalidInput(format!("{what} must have dimension >= 1")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(AbcError::InvalidInput(format!("{what} has non-finite entry {v}")));
    }
    Ok(())
}

macro_rules! finite_vector {
    ($(#[$meta:meta])* $name:ident, $what:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Vec<f64>);

        impl $name {
            /// Build a vector, rejecting empty or non-finite input.
            pub fn new(values: Vec<f64>) -> Result<Self> {
                check_finite(&values, $what)?;
                Ok(Self(values))
            }

            /// Build without validation. Callers guarantee finiteness.
            pub fn from_vec_unchecked(values: Vec<f64>) -> Self {
                Self(values)
            }

            pub fn scalar(value: f64) -> Self {
                Self(vec![value])
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }
    };
}

finite_vector!(
    /// A model parameter vector θ.
    ParamVector,
    "parameter vector"
);
finite_vector!(
    /// A vector of summary statistics s = S(y).
    SummaryVector,
    "summary vector"
);

/// A parameter value with its simulated summaries and importance weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedParticle {
    pub theta: ParamVector,
    /// The `T >= 1` summary replicates simulated at `theta`.
    pub summaries: Vec<SummaryVector>,
    pub raw_weight: f64,
    /// Populated by [`ParticlePopulation::normalise`].
    pub normalised_weight: f64,
}

impl WeightedParticle {
    pub fn new(theta: ParamVector, summaries: Vec<SummaryVector>, raw_weight: f64) -> Self {
        Self {
            theta,
            summaries,
            raw_weight,
            normalised_weight: 0.0,
        }
    }
}

/// `N` weighted particles and the tolerance they were weighted under.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticlePopulation {
    pub particles: Vec<WeightedParticle>,
    pub tolerance: f64,
    pub ess_cache: Option<f64>,
}

impl ParticlePopulation {
    pub fn new(particles: Vec<WeightedParticle>, tolerance: f64) -> Self {
        Self {
            particles,
            tolerance,
            ess_cache: None,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn raw_weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.raw_weight).collect()
    }

    pub fn normalised_weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.normalised_weight).collect()
    }

    /// Set every particle's normalised weight and refresh the ESS cache.
    pub fn normalise(&mut self) -> Result<()> {
        let normalised = weights::normalise_weights(&self.raw_weights())?;
        for (p, w) in self.particles.iter_mut().zip(normalised) {
            p.normalised_weight = w;
        }
        self.ess_cache = Some(weights::ess_from_raw(&self.raw_weights())?);
        Ok(())
    }

    /// ESS of the current raw weights, `(Σw)² / Σw²`.
    pub fn ess(&self) -> Result<f64> {
        match self.ess_cache {
            Some(ess) => Ok(ess),
            None => weights::ess_from_raw(&self.raw_weights()),
        }
    }

    /// Coordinate `k` of every particle.
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.particles.iter().map(|p| p.theta[k]).collect()
    }

    pub fn param_dim(&self) -> usize {
        self.particles.first().map_or(0, |p| p.theta.dim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(ParamVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(SummaryVector::new(vec![]).is_err());
        assert!(SummaryVector::new(vec![f64::INFINITY]).is_err());
        assert_eq!(ParamVector::new(vec![1.0, 2.0]).unwrap().dim(), 2);
    }

    #[test]
    fn normalise_population() {
        let mk = |w| WeightedParticle::new(ParamVector::scalar(0.0), vec![SummaryVector::scalar(0.0)], w);
        let mut pop = ParticlePopulation::new(vec![mk(2.0), mk(2.0), mk(4.0)], 1.0);
        pop.normalise().unwrap();
        assert_eq!(pop.normalised_weights(), vec![0.25, 0.25, 0.5]);
        assert!((pop.ess().unwrap() - 1.0 / (0.0625 + 0.0625 + 0.25)).abs() < 1e-12);

        let mut dead = ParticlePopulation::new(vec![mk(0.0), mk(0.0)], 1.0);
        assert!(matches!(dead.normalise(), Err(AbcError::DegeneratePopulation { n: 2 })));
    }
}
