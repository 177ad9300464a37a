//! De-sparsified nodewise Lasso for high-dimensional precision matrices.
//!
//! The crate estimates a sparse precision matrix column by column with
//! Lasso regressions ([`nodewise`]), removes the shrinkage bias with a
//! one-step correction ([`desparsify`]), and builds entrywise confidence
//! intervals and thresholded edge sets on top of it. [`simgen`] and
//! [`experiments`] provide the banded simulation models and the Monte Carlo
//! harness used to check coverage, interval length and selection accuracy.

pub mod desparsify;
pub mod error;
pub mod experiments;
pub mod lasso;
pub mod nodewise;
pub mod numerics;
pub mod simgen;

pub use error::{Error, Result};
pub use numerics::{DesignMatrix, SymMatrix};
