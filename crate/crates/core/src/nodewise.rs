//! Nodewise Lasso estimation of a precision matrix.
//!
//! Column `j` regresses `X_j` on the remaining columns `X_{−j}`, giving
//! coefficients `γ̂_j` and a noise level
//! `τ̂_j² = ‖X_j − X_{−j}γ̂_j‖²/n + λ_j‖γ̂_j‖₁`. The estimate's j-th column
//! is `Γ̂_j/τ̂_j²`, where `Γ̂_j` has `1` at position `j` and `−γ̂_j` elsewhere.
//! The columns are solved independently, so the result is the same whether
//! they are computed sequentially or on a worker pool.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{solve_lasso_gram, solve_sqrt_lasso_gram, GramProblem, LassoSolution, SolverOptions};
use crate::numerics::{sample_covariance, student_t_quantile, DesignMatrix, SymMatrix};

/// `τ̂_j²` values below this mean column `j` is numerically in the span of
/// the others.
pub const TAU_SQ_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Lasso,
    SqrtLasso { lambda0: f64 },
}

/// Nodewise estimate of the precision matrix.
///
/// For the square-root variant `tau_sq` holds `τ̃_j² = τ̂_j² + λ₀τ̂_j‖γ̂_j‖₁`
/// and `lambdas` the effective Lasso penalty `λ₀τ̂_j`, so that
/// `theta[(j, j)] == 1/tau_sq[j]` and the KKT bound `λ_j/τ_j²` read the
/// same way for both variants.
#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    /// Not symmetric in general.
    pub theta: Array2<f64>,
    pub gammas: Vec<Array1<f64>>,
    pub tau_sq: Array1<f64>,
    pub lambdas: Array1<f64>,
    pub variant: Variant,
}

impl PrecisionEstimate {
    pub fn dim(&self) -> usize {
        self.theta.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct NodewiseColumn {
    pub gamma: Array1<f64>,
    pub tau_sq: f64,
    pub theta_col: Array1<f64>,
    /// Penalty of the Lasso the coefficients solve.
    pub effective_lambda: f64,
}

/// Per-column KKT diagnostics: `max_i |(Σ̂Θ̂_j − e_j)_i|` against `λ_j/τ̂_j²`.
#[derive(Debug, Clone)]
pub struct KktReport {
    pub per_column_violation: Array1<f64>,
    pub per_column_bound: Array1<f64>,
    pub worst_ratio: f64,
}

/// The shared penalty `λ = B/√(n − 1 + B²)` with
/// `B = qt(1 − ŝ/(2p), n − 1)` and `ŝ = √n / log p`.
pub fn tuning_lambda(n: usize, p: usize) -> Result<f64> {
    if n < 2 || p < 2 {
        return Err(Error::Config(format!(
            "tuning rule needs n >= 2 and p >= 2, got n={n}, p={p}"
        )));
    }
    let s_hat = (n as f64).sqrt() / (p as f64).ln();
    let tail = s_hat / (2.0 * p as f64);
    if tail >= 1.0 {
        return Err(Error::Config(format!(
            "tuning rule undefined: ŝ/(2p) = {tail} >= 1 for n={n}, p={p}"
        )));
    }
    let b = student_t_quantile(1.0 - tail, (n - 1) as u64)?;
    Ok(b / ((n - 1) as f64 + b * b).sqrt())
}

/// Gram-form regression problem for column `j` of `Σ̂`.
struct ColumnMoments {
    gram: Array2<f64>,
    xty: Array1<f64>,
    yty: f64,
}

fn column_moments(sigma_hat: &SymMatrix, j: usize) -> ColumnMoments {
    let p = sigma_hat.dim();
    let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
    let s = sigma_hat.as_array();
    let gram = Array2::from_shape_fn((p - 1, p - 1), |(a, b)| s[(others[a], others[b])]);
    let xty = Array1::from_iter(others.iter().map(|&k| s[(k, j)]));
    ColumnMoments {
        gram,
        xty,
        yty: s[(j, j)],
    }
}

fn assemble_column(j: usize, p: usize, gamma: &Array1<f64>, tau_sq: f64) -> Array1<f64> {
    let mut col = Array1::zeros(p);
    let mut g = gamma.iter();
    for (k, v) in col.iter_mut().enumerate() {
        *v = if k == j {
            1.0
        } else {
            -g.next().expect("p - 1 coefficients")
        } / tau_sq;
    }
    col
}

fn check_solution(sol: &LassoSolution) -> Result<()> {
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            max_delta: sol.final_max_delta,
        });
    }
    Ok(())
}

fn check_tau(tau_sq: f64) -> Result<()> {
    if !(tau_sq >= TAU_SQ_FLOOR) {
        return Err(Error::DegenerateFit(format!(
            "τ̂² = {tau_sq:e} is below {TAU_SQ_FLOOR:e}; the column is numerically in the span of the others"
        )));
    }
    Ok(())
}

fn lasso_column_from_cov(sigma_hat: &SymMatrix, j: usize, lambda: f64, opts: &SolverOptions) -> Result<NodewiseColumn> {
    let p = sigma_hat.dim();
    let m = column_moments(sigma_hat, j);
    let problem = GramProblem {
        gram: m.gram.view(),
        xty: m.xty.view(),
        yty: m.yty,
        penalty: lambda,
    };
    let sol = solve_lasso_gram(&problem, opts)?;
    check_solution(&sol)?;
    let l1: f64 = sol.coefficients.iter().map(|b| b.abs()).sum();
    let tau_sq = sol.residual_sq + lambda * l1;
    check_tau(tau_sq)?;
    let theta_col = assemble_column(j, p, &sol.coefficients, tau_sq);
    Ok(NodewiseColumn {
        gamma: sol.coefficients,
        tau_sq,
        theta_col,
        effective_lambda: lambda,
    })
}

fn sqrt_column_from_cov(sigma_hat: &SymMatrix, j: usize, lambda0: f64, opts: &SolverOptions) -> Result<NodewiseColumn> {
    let p = sigma_hat.dim();
    let m = column_moments(sigma_hat, j);
    let problem = GramProblem {
        gram: m.gram.view(),
        xty: m.xty.view(),
        yty: m.yty,
        penalty: lambda0,
    };
    let sol = solve_sqrt_lasso_gram(&problem, opts)?;
    check_solution(&sol)?;
    let tau = sol.residual_scale();
    let l1: f64 = sol.coefficients.iter().map(|b| b.abs()).sum();
    let tau_tilde_sq = sol.residual_sq + lambda0 * tau * l1;
    check_tau(tau_tilde_sq)?;
    let theta_col = assemble_column(j, p, &sol.coefficients, tau_tilde_sq);
    Ok(NodewiseColumn {
        gamma: sol.coefficients,
        tau_sq: tau_tilde_sq,
        theta_col,
        effective_lambda: lambda0 * tau,
    })
}

fn check_column(p: usize, j: usize, lambda: f64) -> Result<()> {
    if p < 2 {
        return Err(Error::Domain("nodewise regression needs at least two variables".into()));
    }
    if j >= p {
        return Err(Error::Dimension(format!("column index {j} out of range for p = {p}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!(
            "penalty must be finite and nonnegative, got {lambda}"
        )));
    }
    Ok(())
}

/// One nodewise regression: `X_j` on `X_{−j}` with penalty `lambda_j`.
pub fn nodewise_column(x: &DesignMatrix, j: usize, lambda_j: f64, opts: &SolverOptions) -> Result<NodewiseColumn> {
    check_column(x.p(), j, lambda_j)?;
    let sigma_hat = sample_covariance(x);
    lasso_column_from_cov(&sigma_hat, j, lambda_j, opts).map_err(|e| e.in_column(j))
}

fn assemble(p: usize, columns: Vec<NodewiseColumn>, variant: Variant) -> PrecisionEstimate {
    let mut theta = Array2::zeros((p, p));
    let mut gammas = Vec::with_capacity(p);
    let mut tau_sq = Array1::zeros(p);
    let mut lambdas = Array1::zeros(p);
    for (j, c) in columns.into_iter().enumerate() {
        theta.column_mut(j).assign(&c.theta_col);
        tau_sq[j] = c.tau_sq;
        lambdas[j] = c.effective_lambda;
        gammas.push(c.gamma);
    }
    PrecisionEstimate {
        theta,
        gammas,
        tau_sq,
        lambdas,
        variant,
    }
}

/// Nodewise Lasso from a precomputed sample covariance `Σ̂ = XᵀX/n`.
///
/// Columns run on the current rayon pool; results are collected in column
/// order, so the estimate does not depend on the number of workers.
pub fn nodewise_lasso_cov(sigma_hat: &SymMatrix, lambdas: &[f64], opts: &SolverOptions) -> Result<PrecisionEstimate> {
    let p = sigma_hat.dim();
    if lambdas.len() != p {
        return Err(Error::Dimension(format!(
            "expected {p} penalties, got {}",
            lambdas.len()
        )));
    }
    for (j, &l) in lambdas.iter().enumerate() {
        check_column(p, j, l)?;
    }
    let columns = (0..p)
        .into_par_iter()
        .map(|j| lasso_column_from_cov(sigma_hat, j, lambdas[j], opts).map_err(|e| e.in_column(j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(p, columns, Variant::Lasso))
}

/// Nodewise Lasso with per-column penalties.
pub fn nodewise_lasso(x: &DesignMatrix, lambdas: &[f64], opts: &SolverOptions) -> Result<PrecisionEstimate> {
    nodewise_lasso_cov(&sample_covariance(x), lambdas, opts)
}

/// Square-root nodewise Lasso from a precomputed `Σ̂`.
pub fn nodewise_sqrt_lasso_cov(sigma_hat: &SymMatrix, lambda0: f64, opts: &SolverOptions) -> Result<PrecisionEstimate> {
    let p = sigma_hat.dim();
    check_column(p, 0, lambda0)?;
    let columns = (0..p)
        .into_par_iter()
        .map(|j| sqrt_column_from_cov(sigma_hat, j, lambda0, opts).map_err(|e| e.in_column(j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(p, columns, Variant::SqrtLasso { lambda0 }))
}

/// Square-root nodewise Lasso: columns `Γ̂_j/τ̃_j²`.
pub fn nodewise_sqrt_lasso(x: &DesignMatrix, lambda0: f64, opts: &SolverOptions) -> Result<PrecisionEstimate> {
    nodewise_sqrt_lasso_cov(&sample_covariance(x), lambda0, opts)
}

/// Checks `‖Σ̂Θ̂_j − e_j‖_∞ ≤ λ_j/τ̂_j²` column by column.
pub fn verify_kkt(sigma_hat: &SymMatrix, est: &PrecisionEstimate) -> Result<KktReport> {
    let p = est.dim();
    if sigma_hat.dim() != p {
        return Err(Error::Dimension(format!(
            "Σ̂ is {0}x{0} but the estimate is {p}x{p}",
            sigma_hat.dim()
        )));
    }
    let prod = sigma_hat.as_array().dot(&est.theta);
    let mut violation = Array1::zeros(p);
    let mut bound = Array1::zeros(p);
    let mut worst = 0.0f64;
    for j in 0..p {
        let v = prod
            .column(j)
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        let b = est.lambdas[j] / est.tau_sq[j];
        violation[j] = v;
        bound[j] = b;
        let ratio = if b > 0.0 {
            v / b
        } else if v == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(ratio);
    }
    Ok(KktReport {
        per_column_violation: violation,
        per_column_bound: bound,
        worst_ratio: worst,
    })
}
