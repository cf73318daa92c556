//! Dense matrices and a tape-style reverse-mode differentiation graph.
//!
//! Everything is `f64`. A [`Graph`] is built fresh for each evaluation:
//! push leaves, compose operations, then call [`Graph::backward`] on a
//! 1x1 node to populate gradients for every ancestor.
//!
//! ```
//! use marginlab::tensor::{Graph, Matrix};
//!
//! let mut g = Graph::new();
//! let x = g.leaf(Matrix::scalar(3.0));
//! let y = g.mul(x, x).unwrap();
//! g.backward(y).unwrap();
//! assert_eq!(g.grad(x).unwrap().item(), 6.0);
//! ```

mod graph;
mod matrix;

pub use graph::{log_sum_exp, Graph, NodeId};
pub use matrix::{dot, l2_norm, Matrix};

use thiserror::Error;

/// Default threshold below which a vector is treated as having no direction.
pub const DEFAULT_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("vector {index} is degenerate (norm {norm:e})")]
    DegenerateVector { index: usize, norm: f64 },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("backward requires a 1x1 root, got {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },
}
