use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::{Error, Result};

/// Dense row-major array with an optional gradient buffer.
///
/// Construction validates that `shape` is non-empty with positive extents, that the
/// data length equals the shape product, and that every value is finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: Deserialize<'de> + Scalar"))]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
    #[serde(default)]
    requires_grad: bool,
    #[serde(default, skip_serializing)]
    grad: Option<Vec<F>>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::Shape(format!(
            "shape {shape:?} must have at least one axis and positive extents"
        )));
    }
    Ok(shape.iter().product())
}

pub(crate) fn all_finite<F: Scalar>(data: &[F]) -> bool {
    data.iter().all(|v| v.is_finite())
}

impl<F: Scalar> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if !all_finite(&data) {
            return Err(Error::NonFinite {
                op: "Tensor::new".into(),
            });
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = check_shape(&shape)?;
        Self::new(shape, vec![F::ZERO; len])
    }

    pub fn scalar(v: F) -> Result<Self> {
        Self::new(vec![1], vec![v])
    }

    /// Builds a 2-D tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(
            vec![rows.len(), cols],
            rows.iter().flatten().copied().collect(),
        )
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut t = Self::zeros(vec![n, n])?;
        for i in 0..n {
            t.data[i * n + i] = F::ONE;
        }
        Ok(t)
    }

    /// Used by the graph for values already known to be finite.
    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<F>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[F]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<F>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::Shape(format!(
                "gradient of length {} for tensor of shape {:?}",
                grad.len(),
                self.shape
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Number of rows of a 2-D tensor (or the leading extent otherwise).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Trailing extent; for 2-D tensors the column count.
    pub fn cols(&self) -> usize {
        if self.shape.len() == 1 {
            1
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn get(&self, row: usize, col: usize) -> F {
        self.data[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[F] {
        let c = self.cols();
        &self.data[row * c..(row + 1) * c]
    }

    /// Replaces the data, keeping shape. Rejects non-finite values.
    pub fn assign(&mut self, data: Vec<F>) -> Result<()> {
        if data.len() != self.data.len() {
            return Err(Error::Shape(format!(
                "assigning {} values to shape {:?}",
                data.len(),
                self.shape
            )));
        }
        if !all_finite(&data) {
            return Err(Error::NonFinite {
                op: "Tensor::assign".into(),
            });
        }
        self.data = data;
        Ok(())
    }

    pub(crate) fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// Converts storage precision; the gradient buffer is dropped.
    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::from_f64(v.to_f64())).collect(),
            requires_grad: self.requires_grad,
            grad: None,
        }
    }

    /// Keeps the first `rows` rows, zero-padding at the bottom when `rows` exceeds
    /// the current count.
    pub fn fit_rows(&self, rows: usize) -> Result<Self> {
        let cols = self.cols();
        let mut data = vec![F::ZERO; rows * cols];
        let keep = rows.min(self.rows());
        data[..keep * cols].copy_from_slice(&self.data[..keep * cols]);
        Self::new(vec![rows, cols], data)
    }
}
