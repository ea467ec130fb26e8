//! Distances between summary vectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{AbcError, Result};
use crate::types::SummaryVector;

#[derive(Debug, Clone, PartialEq)]
pub enum DistanceMetric {
    Euclidean,
    /// `√Σ wᵢ (sᵢ − rᵢ)²` with positive weights.
    WeightedEuclidean(Vec<f64>),
    /// `√((s − r)ᵀ W (s − r))` with `W` symmetric positive definite.
    Mahalanobis(DMatrix<f64>),
}

impl DistanceMetric {
    pub fn weighted_euclidean(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(AbcError::Config(
                "weighted euclidean weights must be finite and positive".into(),
            ));
        }
        Ok(Self::WeightedEuclidean(weights))
    }

    pub fn mahalanobis(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(AbcError::Config("mahalanobis matrix must be square".into()));
        }
        let asym = (&matrix - matrix.transpose()).abs().max();
        if asym > 1e-10 * matrix.abs().max().max(1.0) {
            return Err(AbcError::Config("mahalanobis matrix must be symmetric".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) || matrix.clone().cholesky().is_none() {
            return Err(AbcError::Config(
                "mahalanobis matrix must be positive definite".into(),
            ));
        }
        Ok(Self::Mahalanobis(matrix))
    }

    /// Mahalanobis metric whose weight matrix is the sample precision matrix
    /// of a pilot batch of summaries (e.g. prior-predictive simulations).
    pub fn mahalanobis_from_pilot(pilot: &[SummaryVector]) -> Result<Self> {
        let q = pilot.first().map(|s| s.dim()).unwrap_or(0);
        if pilot.len() <= q {
            return Err(AbcError::Config(format!(
                "pilot batch of {} summaries is too small for dimension {q}",
                pilot.len()
            )));
        }
        let n = pilot.len() as f64;
        let mut mean = DVector::zeros(q);
        for s in pilot {
            mean += DVector::from_column_slice(s.as_slice());
        }
        mean /= n;
        let mut cov = DMatrix::zeros(q, q);
        for s in pilot {
            let d = DVector::from_column_slice(s.as_slice()) - &mean;
            cov += &d * d.transpose();
        }
        cov /= n - 1.0;
        let precision = cov
            .cholesky()
            .ok_or_else(|| AbcError::Config("pilot summary covariance is singular".into()))?
            .inverse();
        let sym = (&precision + precision.transpose()) * 0.5;
        Self::mahalanobis(sym)
    }

    /// Dimension the metric was configured for, if fixed.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            DistanceMetric::Euclidean => None,
            DistanceMetric::WeightedEuclidean(w) => Some(w.len()),
            DistanceMetric::Mahalanobis(m) => Some(m.nrows()),
        }
    }

    pub fn distance(&self, s: &SummaryVector, s_ref: &SummaryVector) -> Result<f64> {
        if s.dim() != s_ref.dim() {
            return Err(AbcError::DimensionMismatch {
                expected: s_ref.dim(),
                got: s.dim(),
            });
        }
        if let Some(q) = self.dimension() {
            if q != s.dim() {
                return Err(AbcError::DimensionMismatch {
                    expected: q,
                    got: s.dim(),
                });
            }
        }
        let diff = s.iter().zip(s_ref.iter()).map(|(a, b)| a - b);
        let squared = match self {
            DistanceMetric::Euclidean => diff.map(|d| d * d).sum(),
            DistanceMetric::WeightedEuclidean(w) => diff.zip(w).map(|(d, w)| w * d * d).sum(),
            DistanceMetric::Mahalanobis(m) => {
                let d = DVector::from_iterator(s.dim(), diff);
                (d.transpose() * m * &d)[(0, 0)]
            }
        };
        Ok(f64::max(squared, 0.0).sqrt())
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::WeightedEuclidean(_) => "weighted_euclidean",
            DistanceMetric::Mahalanobis(_) => "mahalanobis",
        }
    }
}

/// Free-function form of [`DistanceMetric::distance`].
pub fn distance(metric: &DistanceMetric, s: &SummaryVector, s_ref: &SummaryVector) -> Result<f64> {
    metric.distance(s, s_ref)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(v: &[f64]) -> SummaryVector {
        SummaryVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn documented_values() {
        let e = DistanceMetric::Euclidean;
        assert_eq!(e.distance(&sv(&[1.0, 2.0]), &sv(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(e.distance(&sv(&[0.0, 0.0]), &sv(&[3.0, 4.0])).unwrap(), 5.0);
        let m = DistanceMetric::mahalanobis(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]))).unwrap();
        let d = m.distance(&sv(&[0.0, 0.0]), &sv(&[1.0, 1.0])).unwrap();
        assert!((d - 5f64.sqrt()).abs() < 1e-15);
        let w = DistanceMetric::weighted_euclidean(vec![4.0, 1.0]).unwrap();
        assert!((w.distance(&sv(&[0.0, 0.0]), &sv(&[1.0, 1.0])).unwrap() - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn construction_errors() {
        assert!(DistanceMetric::mahalanobis(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(DistanceMetric::mahalanobis(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        assert!(DistanceMetric::weighted_euclidean(vec![1.0, 0.0]).is_err());
        let e = DistanceMetric::Euclidean;
        assert!(matches!(
            e.distance(&sv(&[1.0]), &sv(&[1.0, 2.0])),
            Err(AbcError::DimensionMismatch { .. })
        ));
        let w = DistanceMetric::weighted_euclidean(vec![1.0, 1.0, 1.0]).unwrap();
        assert!(w.distance(&sv(&[1.0, 2.0]), &sv(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn pilot_precision() {
        // Independent coordinates with sd 1 and 10: precision ≈ diag(1, 0.01).
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pilot: Vec<_> = (0..20_000)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                sv(&[a, 10.0 * b])
            })
            .collect();
        let DistanceMetric::Mahalanobis(m) = DistanceMetric::mahalanobis_from_pilot(&pilot).unwrap() else {
            panic!()
        };
        assert!((m[(0, 0)] - 1.0).abs() < 0.05);
        assert!((m[(1, 1)] - 0.01).abs() < 0.0005);
        assert!(m[(0, 1)].abs() < 0.003);
    }

    proptest! {
        #[test]
        fn metric_axioms(a in prop::collection::vec(-100.0f64..100.0, 3), b in prop::collection::vec(-100.0f64..100.0, 3)) {
            let (a, b) = (sv(&a), sv(&b));
            let metrics = [
                DistanceMetric::Euclidean,
                DistanceMetric::weighted_euclidean(vec![0.5, 2.0, 1.0]).unwrap(),
                DistanceMetric::mahalanobis(DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 3.0])).unwrap(),
            ];
            for m in &metrics {
                let ab = m.distance(&a, &b).unwrap();
                let ba = m.distance(&b, &a).unwrap();
                prop_assert!(ab >= 0.0);
                prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
                prop_assert_eq!(m.distance(&a, &a).unwrap(), 0.0);
                if a != b {
                    prop_assert!(ab > 0.0);
                }
            }
        }
    }
}
