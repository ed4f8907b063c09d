//! Shape-checked 2-D tensors with a reverse-mode tape.
//!
//! Every value is a row-major matrix; vectors are single rows. A [`Tape`]
//! records each primitive with what its backward rule needs, and
//! [`Tape::backward`] walks it once in reverse.

mod error;
mod gradcheck;
mod nn;
mod params;
mod real;
mod tape;

pub use error::TensorError;
pub use gradcheck::{finite_diff_check, primitive_suite, GradCheckReport, ParamCheck, PrimitiveReport};
pub use nn::{dropout, dropout_mask, lstm_cell, LstmWeights};
pub use params::{ParamGrads, ParamId, ParamStore};
pub use real::Real;
pub use tape::{Tape, Var};

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub const fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.rows, self.cols)
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Shape,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            shape: Shape::new(rows, cols),
            data: vec![F::ZERO; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: F) -> Self {
        Self {
            shape: Shape::new(rows, cols),
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::DataLength {
                shape: Shape::new(rows, cols),
                len: data.len(),
            });
        }
        Ok(Self {
            shape: Shape::new(rows, cols),
            data,
        })
    }

    pub fn row_vector(data: Vec<F>) -> Self {
        Self {
            shape: Shape::new(1, data.len()),
            data,
        }
    }

    pub fn scalar(value: F) -> Self {
        Self::row_vector(vec![value])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape.rows
    }

    pub fn cols(&self) -> usize {
        self.shape.cols
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[F] {
        let c = self.shape.cols;
        &self.data[r * c..(r + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.shape.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: F) {
        let cols = self.shape.cols;
        self.data[r * cols + c] = v;
    }

    /// The single value of a 1×1 tensor.
    pub fn item(&self) -> F {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {}", self.shape);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Converts element type, e.g. an f32 model to f64 for gradient checks.
    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| G::from_f64(v.to_f64())).collect(),
        }
    }

    /// Plain matrix product, outside any tape.
    pub fn matmul(&self, rhs: &Self) -> Result<Self, TensorError> {
        if self.cols() != rhs.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape,
                rhs: rhs.shape,
            });
        }
        let (m, k, n) = (self.rows(), self.cols(), rhs.cols());
        let mut out = Self::zeros(m, n);
        F::gemm(
            m,
            k,
            n,
            F::ONE,
            &self.data,
            (k as isize, 1),
            &rhs.data,
            (n as isize, 1),
            F::ZERO,
            &mut out.data,
            (n as isize, 1),
        );
        Ok(out)
    }
}
