//! Dense 64-bit tensors with explicit shapes.

use super::DiffError;

/// A dense array of 64-bit reals. Data is row-major; the element count always
/// equals the product of the shape.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorValue {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TensorValue {
    /// Builds a tensor, checking that the data length matches the shape.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, DiffError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(DiffError::Shape {
                op: "tensor",
                detail: format!(
                    "shape {shape:?} holds {expected} elements but {} were given",
                    data.len()
                ),
            });
        }
        Ok(TensorValue { shape, data })
    }

    /// An all-zero tensor.
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        TensorValue {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// A rank-0 style scalar stored as shape `[1]`.
    pub fn scalar(value: f64) -> Self {
        TensorValue {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// A rank-1 tensor.
    pub fn vector(data: Vec<f64>) -> Self {
        TensorValue {
            shape: vec![data.len()],
            data,
        }
    }

    /// A rank-2 tensor in row-major order.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DiffError> {
        TensorValue::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Number of stored elements.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Sets every entry to zero.
    pub fn fill_zero(&mut self) {
        self.data.fill(0.0);
    }
}
