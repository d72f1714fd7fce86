//! Minimal reverse-mode automatic differentiation over dense 2-D tensors.
//!
//! A [`Graph`] is an append-only tape. Every operation records its inputs and
//! the forward value; [`Graph::backward`] walks the tape in reverse and
//! accumulates vector-Jacobian products. Because nodes are only ever appended,
//! tape order is already a topological order.
//!
//! The operator set is deliberately small: exactly what the spatio-temporal
//! model, its losses and the explanation objectives need. Message passing over
//! a graph is expressed with [`Graph::gather_rows`], [`Graph::segment_softmax`]
//! and [`Graph::scatter_add_rows`] over an explicit edge list.

mod tape;
mod tensor;

pub use tape::{Gradients, Graph, Var};
pub use tensor::Tensor;

pub(crate) use tensor::gemm;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("tensor of shape {shape:?} cannot hold {len} values")]
    BadLength { shape: Vec<usize>, len: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("segment {0} has no entries")]
    EmptySegment(usize),
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("non-finite value entered the graph in {0}")]
    NonFinite(&'static str),
    #[error("{0}")]
    Invalid(String),
}

impl AutodiffError {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Self::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}

/// Negative slope used by every LeakyReLU in the model.
pub const LEAKY_SLOPE: f64 = 0.2;

/// ELU saturation constant.
pub const ELU_ALPHA: f64 = 1.0;

pub(crate) fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

pub(crate) fn elu(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        alpha * x.exp_m1()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
