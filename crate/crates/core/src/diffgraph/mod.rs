//! Minimal reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is an arena of [`GraphNode`]s. Leaves are created with
//! [`Graph::param`] (trainable) or [`Graph::constant`]; every op appends a
//! node that remembers its parents and whatever its backward rule needs.
//! There is no broadcasting beyond scalar-with-tensor; reshape explicitly.
//!
//! ```
//! use laconv::diffgraph::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::vector(vec![1.0, -2.0, 3.0]));
//! let y = g.relu(x).unwrap();
//! let s = g.sum(y).unwrap();
//! g.backward(s).unwrap();
//! assert_eq!(g.grad(x).data(), &[1.0, 0.0, 1.0]);
//! ```

mod graph;
pub mod gradcheck;
mod kernels;
mod tensor;

use thiserror::Error;

pub use graph::{Graph, GraphNode, NodeId, Op, MAX_CONDITION};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("matrix block {index} is singular (condition estimate {condition:e})")]
    Singular { index: usize, condition: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
}

impl GraphError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        GraphError::Shape {
            op,
            detail: detail.into(),
        }
    }
}

/// Logistic function, stable for large `|v|`.
pub fn sigmoid(v: f64) -> f64 {
    graph::sigmoid(v)
}
