//! Shot-budgeted acquisition of quantum kernel matrices.
//!
//! The crate simulates per-pair Bernoulli shot noise on a ground-truth kernel,
//! computes sensitivity-weighted shot allocations for kernel ridge regression
//! and SVMs, runs the multi-round adaptive loop against baseline allocators,
//! and evaluates the closed-form variance and remainder bounds.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod allocators;
pub mod error;
pub mod harness;
pub mod kernelgen;
pub mod krr;
pub mod numerics;
pub mod pairs;
pub mod rng;
pub mod shotsim;
pub mod svm;
pub mod theory;

pub use error::{AqkaError, Result};
pub use numerics::SymMatrix;
