//! The extended-vector ensemble representation.

use alloc::vec::Vec;

use crate::error::{PosError, Result};
use crate::fm;
use crate::stats::pairwise_dot;

/// A flat block of `n_samples` trajectories of dimension `dim`, sample-major
/// (each trajectory's coordinates are contiguous). The whole block is the
/// extended vector the optimizers act on.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    data: Vec<f64>,
    n_samples: usize,
    dim: usize,
}

impl Ensemble {
    /// Builds an ensemble, validating shape and finiteness. Non-finite
    /// entries are a reportable error, never silently propagated.
    pub fn new(data: Vec<f64>, n_samples: usize, dim: usize) -> Result<Self> {
        if n_samples == 0 || dim == 0 {
            return Err(PosError::InvalidInput("ensemble must have n_samples >= 1 and dim >= 1"));
        }
        if data.len() != n_samples * dim {
            return Err(PosError::InvalidInput("ensemble data length must equal n_samples * dim"));
        }
        if let Some(index) = first_non_finite(&data) {
            return Err(PosError::NonFinite { context: "ensemble data", index });
        }
        Ok(Ensemble { data, n_samples, dim })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Extended-vector length `n_samples * dim`.
    pub fn len_ext(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Coordinates of sample `n`.
    pub fn sample(&self, n: usize) -> &[f64] {
        &self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Euclidean norm of the extended vector.
    pub fn norm(&self) -> f64 {
        fm::sqrt(pairwise_dot(&self.data, &self.data))
    }

    pub(crate) fn check_finite(&self, context: &'static str) -> Result<()> {
        match first_non_finite(&self.data) {
            Some(index) => Err(PosError::NonFinite { context, index }),
            None => Ok(()),
        }
    }
}

pub(crate) fn first_non_finite(data: &[f64]) -> Option<usize> {
    data.iter().position(|v| !v.is_finite())
}

/// Relative distance `‖a − b‖ / ‖b‖` between two equally shaped extended
/// vectors; `b` is the reference.
pub fn relative_distance(a: &Ensemble, b: &Ensemble) -> Result<f64> {
    if a.n_samples() != b.n_samples() || a.dim() != b.dim() {
        return Err(PosError::InvalidInput("relative_distance requires equal shapes"));
    }
    vector_relative_distance(a.as_slice(), b.as_slice())
}

/// Slice form of [`relative_distance`], used for noise-vector distances.
pub fn vector_relative_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(PosError::InvalidInput("relative_distance requires equal lengths"));
    }
    let ref_norm = fm::sqrt(pairwise_dot(b, b));
    if ref_norm == 0.0 {
        return Err(PosError::InvalidInput("relative_distance reference has zero norm"));
    }
    let diff: alloc::vec::Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
    Ok(fm::sqrt(pairwise_dot(&diff, &diff)) / ref_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_shape_mismatch_and_non_finite() {
        assert!(Ensemble::new(vec![1.0, 2.0], 3, 1).is_err());
        assert!(Ensemble::new(vec![], 0, 1).is_err());
        let err = Ensemble::new(vec![1.0, f64::NAN, 3.0], 3, 1).unwrap_err();
        assert!(matches!(err, PosError::NonFinite { index: 1, .. }));
    }

    #[test]
    fn distance_of_identical_is_zero() {
        let a = Ensemble::new(vec![1.0, -2.0, 0.5], 3, 1).unwrap();
        assert_eq!(relative_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn distance_of_doubled_is_one() {
        let b = Ensemble::new(vec![1.0, -2.0, 0.5], 3, 1).unwrap();
        let a = Ensemble::new(vec![2.0, -4.0, 1.0], 3, 1).unwrap();
        assert!((relative_distance(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distance_rejects_zero_reference() {
        let a = Ensemble::new(vec![1.0], 1, 1).unwrap();
        let b = Ensemble::new(vec![0.0], 1, 1).unwrap();
        assert!(relative_distance(&a, &b).is_err());
    }
}
