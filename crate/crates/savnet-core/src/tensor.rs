//! Dense row-major tensors of `f64`, rank 1 through 4.
//!
//! Every tensor in the crate is finite by construction: [`Tensor::new`]
//! rejects NaN and infinity instead of letting them propagate silently.

use thiserror::Error;

/// Errors produced by tensor construction and the ops in [`crate::tape`].
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("invalid shape {dims:?}: {reason}")]
    InvalidShape { dims: Vec<usize>, reason: String },
    #[error("non-finite value at flat index {index} (op: {op})")]
    NonFinite { op: &'static str, index: usize },
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
}

/// Dense multidimensional array, row-major, 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor, validating rank (1..=4), positive dims,
    /// `product(dims) == data.len()`, and that every value is finite.
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(TensorError::InvalidShape {
                reason: format!("rank {} outside 1..=4", dims.len()),
                dims,
            });
        }
        if dims.contains(&0) {
            return Err(TensorError::InvalidShape {
                reason: "zero-sized dimension".into(),
                dims,
            });
        }
        let numel: usize = dims.iter().product();
        if numel != data.len() {
            return Err(TensorError::InvalidShape {
                reason: format!("product(dims) = {} but data length = {}", numel, data.len()),
                dims,
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "new", index });
        }
        Ok(Self { dims, data })
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(dims: Vec<usize>) -> Result<Self, TensorError> {
        let numel: usize = dims.iter().product();
        Self::new(dims, vec![0.0; numel])
    }

    /// Rank-1 scalar wrapper (dims `[1]`).
    pub fn scalar(value: f64) -> Result<Self, TensorError> {
        Self::new(vec![1], vec![value])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Value of a dims-`[1]` tensor.
    pub fn scalar_value(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1, "scalar_value on non-scalar tensor");
        self.data[0]
    }

    /// True when shapes match and all entries are within `tol` of each other.
    pub fn allclose(&self, other: &Tensor, tol: f64) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// Shape-error helper used by the tape ops.
pub(crate) fn shape_err(op: &'static str, detail: String) -> TensorError {
    TensorError::ShapeMismatch { op, detail }
}
