//! Dense real vectors: the unit of optimization state and of everything
//! that crosses a communication link.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelVector(Vec<f64>);

impl ModelVector {
    pub fn zeros(dim: usize) -> Self {
        ModelVector(vec![0.0; dim])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ModelVector(values)
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

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &ModelVector) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `‖self − other‖²`.
    pub fn dist_sq(&self, other: &ModelVector) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn add(&self, other: &ModelVector) -> Result<ModelVector> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &ModelVector) -> Result<ModelVector> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn scale(&self, s: f64) -> ModelVector {
        ModelVector(self.0.iter().map(|v| v * s).collect())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ModelVector) -> Result<()> {
        check_dim(self.dim(), other.dim())?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ModelVector {
        ModelVector(self.0.iter().map(|&v| f(v)).collect())
    }

    fn zip_map(&self, other: &ModelVector, f: impl Fn(f64, f64) -> f64) -> ModelVector {
        ModelVector(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }
}

impl From<Vec<f64>> for ModelVector {
    fn from(values: Vec<f64>) -> Self {
        ModelVector(values)
    }
}

impl Index<usize> for ModelVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ModelVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Plain dot product. Four independent accumulators let the compiler
/// vectorize without `-ffast-math` style reassociation.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}
