//! Large margin cosine loss (LMCL) and its relatives, with the geometry that
//! bounds their hyperparameters and a desk-scale training harness.
//!
//! - [`tensor`]: dense matrices and a reverse-mode autodiff graph.
//! - [`losses`]: softmax, normalized softmax (NSL) and LMCL.
//! - [`bounds`]: the lower bound on the scale `s`, the scope of the margin
//!   `m`, uniform weight configurations and two-class decision regions.
//! - [`trainer`]: synthetic Gaussian blobs, a small MLP and SGD training.
//! - [`experiments`]: multi-seed margin sweeps and the normalization ablation.
//! - [`eval`]: cosine verification, TAR@FAR and rank-1 identification.
//! - [`cli`]: the `marginlab` command-line tool.
//!
//! ```
//! use marginlab::bounds::{m_scope, s_lower_bound};
//!
//! // eight classes on a circle leave at most 1 - cos(pi/4) of cosine margin
//! let scope = m_scope(8, 2).unwrap();
//! assert!((scope.m_upper - 0.2929).abs() < 1e-4);
//! assert!(s_lower_bound(8, 0.99).unwrap() < 64.0);
//! ```

pub mod bounds;
pub mod cli;
pub mod eval;
pub mod experiments;
pub mod losses;
pub mod tensor;
pub mod trainer;
