//! Dense f64 vectors with a finiteness invariant.
//!
//! Every public constructor rejects NaN/Inf entries; arithmetic keeps the
//! invariant as long as inputs are finite and magnitudes stay in range.
//! Iterate blow-ups (e.g. from an unstable step size) are caught at metric
//! recording time by [`Vector::is_finite`].

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense vector of 64-bit floats. The coordinate count is its dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    /// Builds a vector, rejecting non-finite entries and zero dimension.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::DimensionMismatch("vector must have dim >= 1".into()));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("non-finite vector entry".into()));
        }
        Ok(Vector(data))
    }

    /// Internal constructor for values produced by our own arithmetic.
    pub(crate) fn from_raw(data: Vec<f64>) -> Self {
        Vector(data)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn add(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector(self.0.iter().map(|a| a * s).collect())
    }

    /// `self + s * other`, allocated.
    pub fn axpy(&self, s: f64, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + s * b)
                .collect(),
        )
    }

    /// In-place `self += s * other`.
    pub fn axpy_mut(&mut self, s: f64, other: &Vector) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += s * b;
        }
    }

    /// Arithmetic mean over a slice of equally sized vectors.
    ///
    /// Summation is a fixed ascending-index pairwise tree, so the result is
    /// bit-reproducible and averaging 2^k identical vectors is exact (server
    /// reductions and the n=1-equivalence tests rely on both properties).
    pub fn mean_of(vectors: &[Vector]) -> Vector {
        assert!(!vectors.is_empty(), "mean of empty set");
        fn sum_tree(vectors: &[Vector]) -> Vector {
            match vectors.len() {
                1 => vectors[0].clone(),
                2 => vectors[0].add(&vectors[1]),
                n => {
                    let mid = n / 2;
                    sum_tree(&vectors[..mid]).add(&sum_tree(&vectors[mid..]))
                }
            }
        }
        sum_tree(vectors).scale(1.0 / vectors.len() as f64)
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<nalgebra::DVector<f64>> for Vector {
    fn from(v: nalgebra::DVector<f64>) -> Self {
        Vector(v.data.into())
    }
}

impl From<&Vector> for nalgebra::DVector<f64> {
    fn from(v: &Vector) -> Self {
        nalgebra::DVector::from_column_slice(&v.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
        assert!(Vector::new(vec![]).is_err());
    }

    #[test]
    fn mean_is_fixed_order() {
        let vs = vec![
            Vector::new(vec![0.0, 2.0]).unwrap(),
            Vector::new(vec![2.0, 0.0]).unwrap(),
        ];
        assert_eq!(Vector::mean_of(&vs).as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn axpy_matches_scale_add() {
        let a = Vector::new(vec![1.0, -2.0, 3.0]).unwrap();
        let b = Vector::new(vec![0.5, 0.25, -1.0]).unwrap();
        assert_eq!(a.axpy(2.0, &b), a.add(&b.scale(2.0)));
    }
}
