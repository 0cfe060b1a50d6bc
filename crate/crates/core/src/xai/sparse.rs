//! Minimal sparse vector used as the instance type across the pipeline.

use serde::{Deserialize, Serialize};

use super::XaiError;

/// Sorted-index sparse vector with explicit dimension. Zero values are
/// never stored, so equality means structural equality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVec {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVec {
    pub fn zeros(dim: usize) -> Self {
        SparseVec { dim, indices: Vec::new(), values: Vec::new() }
    }

    /// Builds from parallel arrays; indices must be strictly increasing and
    /// in range, values finite. Zero values are dropped.
    pub fn new(dim: usize, indices: Vec<usize>, values: Vec<f64>) -> Result<Self, XaiError> {
        if indices.len() != values.len() {
            return Err(XaiError::LengthMismatch { left: indices.len(), right: values.len() });
        }
        let mut v = SparseVec::zeros(dim);
        let mut last: Option<usize> = None;
        for (i, x) in indices.into_iter().zip(values) {
            if i >= dim {
                return Err(XaiError::DimensionMismatch { expected: dim, got: i });
            }
            if last.is_some_and(|p| p >= i) {
                return Err(XaiError::InvalidConfig("indices not strictly increasing".into()));
            }
            if !x.is_finite() {
                return Err(XaiError::NonFiniteInput);
            }
            last = Some(i);
            if x != 0.0 {
                v.indices.push(i);
                v.values.push(x);
            }
        }
        Ok(v)
    }

    /// Constructor for callers that already guarantee strictly increasing
    /// in-range indices and finite nonzero values.
    pub(crate) fn from_sorted_unchecked(dim: usize, indices: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(indices.len(), values.len());
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(indices.iter().all(|&i| i < dim));
        debug_assert!(values.iter().all(|x| x.is_finite() && *x != 0.0));
        SparseVec { dim, indices, values }
    }

    pub fn from_dense(dense: &[f64]) -> Result<Self, XaiError> {
        let mut v = SparseVec::zeros(dense.len());
        for (i, &x) in dense.iter().enumerate() {
            if !x.is_finite() {
                return Err(XaiError::NonFiniteInput);
            }
            if x != 0.0 {
                v.indices.push(i);
                v.values.push(x);
            }
        }
        Ok(v)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&i, &x) in self.indices.iter().zip(&self.values) {
            out[i] = x;
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    /// Sets one coordinate, keeping the no-stored-zeros invariant.
    pub fn set(&mut self, index: usize, value: f64) {
        debug_assert!(index < self.dim);
        match self.indices.binary_search(&index) {
            Ok(pos) => {
                if value == 0.0 {
                    self.indices.remove(pos);
                    self.values.remove(pos);
                } else {
                    self.values[pos] = value;
                }
            }
            Err(pos) => {
                if value != 0.0 {
                    self.indices.insert(pos, index);
                    self.values.insert(pos, value);
                }
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn active_indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dot_dense(&self, w: &[f64]) -> Result<f64, XaiError> {
        if w.len() != self.dim {
            return Err(XaiError::DimensionMismatch { expected: self.dim, got: w.len() });
        }
        Ok(self.iter().map(|(i, x)| x * w[i]).sum())
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Scales all stored values in place; a zero factor clears the vector.
    pub fn scale(&mut self, factor: f64) {
        if factor == 0.0 {
            self.indices.clear();
            self.values.clear();
        } else {
            for x in &mut self.values {
                *x *= factor;
            }
        }
    }
}
