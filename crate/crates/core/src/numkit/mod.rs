//! Dense linear algebra and reverse-mode differentiation.
//!
//! Everything is `f64`. The tape records a closed set of primitives (matmul,
//! broadcasting arithmetic, activations, softmax and cross-entropy,
//! reductions, slicing, gradient reversal) which is enough for the fixed
//! architectures in [`crate::model`].

mod matrix;
mod tape;

pub use matrix::Matrix;
pub use tape::{GradMap, NodeGrads, NodeId, ParamId, Tape};

use crate::error::Result;

/// Clamp applied to probabilities before taking logarithms.
pub const LOG_EPS: f64 = 1e-12;

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.matmul(b)
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.sigmoid()
}

pub fn relu(x: &Matrix) -> Matrix {
    x.relu()
}

pub fn softmax_rows(x: &Matrix) -> Matrix {
    x.softmax_rows()
}

/// Mean over rows of `-ln(max(probs[row][label], LOG_EPS))`.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    tape::cross_entropy_value(probs, labels, LOG_EPS)
}
