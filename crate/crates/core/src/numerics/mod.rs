//! Special functions and dense symmetric-matrix kernels shared by the
//! estimation, inference and simulation modules.

mod linalg;
mod special;

pub use linalg::{
    cholesky, sample_covariance, spd_inverse, sym_eigen, sym_sqrt, DesignMatrix, SpdFactor, SymEigen, SymMatrix,
};
pub(crate) use linalg::{cholesky_view, max_abs};
pub use special::{ln_gamma, reg_inc_beta, std_normal_cdf, std_normal_quantile, student_t_cdf, student_t_quantile};
