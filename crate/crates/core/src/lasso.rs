//! Lasso and square-root Lasso by cyclic coordinate descent.
//!
//! The Lasso objective is `‖y − Xγ‖²/n + 2λ‖γ‖₁`, whose stationarity
//! conditions read `X_kᵀ(y − Xγ)/n = λ·κ_k` with `κ` a subgradient of the
//! ℓ₁ norm. The square-root Lasso minimizes `‖y − Xγ‖/√n + λ₀‖γ‖₁`; at its
//! solution `γ` solves the Lasso with penalty `λ₀·σ̂`, `σ̂ = ‖y − Xγ‖/√n`.
//!
//! Two entry points exist for each problem: one working on the raw design
//! with residual updates, and one working on a precomputed Gram matrix
//! (`XᵀX/n`, `Xᵀy/n`, `yᵀy/n`), which is what nodewise regression uses
//! since every column shares the same sample covariance.

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::numerics::cholesky_view;

/// Coordinate-descent controls.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Stop when the largest coefficient change in a full sweep is at most this.
    pub tol: f64,
    /// Maximum number of full sweeps.
    pub max_iters: usize,
    pub warm_start: Option<Array1<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 10_000,
            warm_start: None,
        }
    }
}

impl SolverOptions {
    fn validate(&self, q: usize) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!(
                "solver tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if let Some(w) = &self.warm_start {
            if w.len() != q {
                return Err(Error::Dimension(format!(
                    "warm start has length {}, expected {q}",
                    w.len()
                )));
            }
        }
        Ok(())
    }
}

/// Lasso regression of `response` on the columns of `design` with penalty λ.
#[derive(Debug, Clone, Copy)]
pub struct LassoProblem<'a> {
    pub design: ArrayView2<'a, f64>,
    pub response: ArrayView1<'a, f64>,
    pub penalty: f64,
}

impl<'a> LassoProblem<'a> {
    pub fn new(design: ArrayView2<'a, f64>, response: ArrayView1<'a, f64>, penalty: f64) -> Result<Self> {
        let problem = Self {
            design,
            response,
            penalty,
        };
        problem.validate()?;
        Ok(problem)
    }

    fn validate(&self) -> Result<()> {
        if self.design.nrows() != self.response.len() {
            return Err(Error::Dimension(format!(
                "design has {} rows but response has length {}",
                self.design.nrows(),
                self.response.len()
            )));
        }
        if self.design.nrows() == 0 {
            return Err(Error::Domain("lasso problem needs at least one observation".into()));
        }
        if !(self.penalty >= 0.0) || !self.penalty.is_finite() {
            return Err(Error::Domain(format!(
                "penalty must be finite and nonnegative, got {}",
                self.penalty
            )));
        }
        if let Some(((row, col), _)) = self.design.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        if let Some((row, _)) = self.response.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col: 0 });
        }
        Ok(())
    }
}

/// The same problem expressed through second moments:
/// `gram = XᵀX/n`, `xty = Xᵀy/n`, `yty = yᵀy/n`.
#[derive(Debug, Clone, Copy)]
pub struct GramProblem<'a> {
    pub gram: ArrayView2<'a, f64>,
    pub xty: ArrayView1<'a, f64>,
    pub yty: f64,
    pub penalty: f64,
}

impl GramProblem<'_> {
    fn validate(&self) -> Result<()> {
        let q = self.xty.len();
        if self.gram.nrows() != q || self.gram.ncols() != q {
            return Err(Error::Dimension(format!(
                "gram is {}x{} but xty has length {q}",
                self.gram.nrows(),
                self.gram.ncols()
            )));
        }
        if !(self.penalty >= 0.0) || !self.penalty.is_finite() {
            return Err(Error::Domain(format!(
                "penalty must be finite and nonnegative, got {}",
                self.penalty
            )));
        }
        if let Some(((row, col), _)) = self.gram.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        if !self.yty.is_finite() || self.xty.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite moment in gram problem".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub coefficients: Array1<f64>,
    /// Full coordinate sweeps performed (summed over outer iterations for
    /// the square-root Lasso).
    pub iterations: usize,
    pub final_max_delta: f64,
    /// Objective value at `coefficients`.
    pub objective: f64,
    /// False when the sweep cap was reached before the tolerance and KKT
    /// checks passed.
    pub converged: bool,
    /// `‖y − Xγ‖²/n` at the solution.
    pub residual_sq: f64,
}

impl LassoSolution {
    /// `‖y − Xγ‖/√n`.
    pub fn residual_scale(&self) -> f64 {
        self.residual_sq.sqrt()
    }
}

/// `sign(z)·max(|z| − t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Stationarity tolerance used after a solve: `1e-6·max(1, λ)`.
pub fn kkt_tolerance(penalty: f64) -> f64 {
    1e-6 * penalty.max(1.0)
}

fn stationarity_violation(gradient: &[f64], coefficients: &[f64], penalty: f64) -> f64 {
    gradient
        .iter()
        .zip(coefficients)
        .map(|(&g, &b)| {
            if b == 0.0 {
                (g.abs() - penalty).max(0.0)
            } else {
                (g - penalty * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Largest violation of the Lasso stationarity conditions at `coefficients`.
///
/// For inactive coordinates this is `max(|X_kᵀr/n| − λ, 0)`; for active ones
/// `|X_kᵀr/n − λ·sign(γ_k)|`, with `r = y − Xγ`.
pub fn kkt_residual(problem: &LassoProblem<'_>, coefficients: ArrayView1<'_, f64>) -> Result<f64> {
    if coefficients.len() != problem.design.ncols() {
        return Err(Error::Dimension(format!(
            "expected {} coefficients, got {}",
            problem.design.ncols(),
            coefficients.len()
        )));
    }
    let n = problem.design.nrows() as f64;
    let resid = &problem.response - &problem.design.dot(&coefficients);
    let grad = problem.design.t().dot(&resid) / n;
    Ok(stationarity_violation(
        grad.as_slice().expect("contiguous"),
        &coefficients.to_vec(),
        problem.penalty,
    ))
}

/// [`kkt_residual`] for a problem in Gram form.
pub fn kkt_residual_gram(problem: &GramProblem<'_>, coefficients: ArrayView1<'_, f64>) -> f64 {
    let grad = &problem.xty - &problem.gram.dot(&coefficients);
    stationarity_violation(&grad.to_vec(), &coefficients.to_vec(), problem.penalty)
}

/// Re-solves the stationarity equations exactly on the current active set:
/// `G_AA γ_A = c_A − λ s_A`. Returns `None` when the system is singular or
/// the solution flips a sign.
fn polish_active_set(
    q: usize,
    gram_entry: impl Fn(usize, usize) -> f64,
    xty: &[f64],
    penalty: f64,
    coefficients: &[f64],
) -> Option<Vec<f64>> {
    let active: Vec<usize> = (0..q).filter(|&k| coefficients[k] != 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let m = active.len();
    let mut g = ndarray::Array2::<f64>::zeros((m, m));
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate().skip(a) {
            let v = gram_entry(i, j);
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    let factor = cholesky_view(g.view()).ok()?;
    let mut rhs: Vec<f64> = active
        .iter()
        .map(|&k| xty[k] - penalty * coefficients[k].signum())
        .collect();
    factor.solve_in_place(&mut rhs);
    let mut out = vec![0.0; q];
    for (a, &k) in active.iter().enumerate() {
        if rhs[a].signum() != coefficients[k].signum() || rhs[a] == 0.0 || !rhs[a].is_finite() {
            return None;
        }
        out[k] = rhs[a];
    }
    Some(out)
}

/// Lasso by cyclic coordinate descent with residual updates.
///
/// Coordinates are visited in index order. After the sweep tolerance is met
/// the active set is re-solved exactly when that lowers the stationarity
/// violation, and the KKT conditions are checked; sweeping resumes if they
/// fail.
pub fn solve_lasso(problem: &LassoProblem<'_>, opts: &SolverOptions) -> Result<LassoSolution> {
    problem.validate()?;
    let x = problem.design;
    let y = problem.response;
    let (n_rows, q) = x.dim();
    opts.validate(q)?;
    let n = n_rows as f64;
    let lambda = problem.penalty;

    let col_sq: Vec<f64> = (0..q).map(|k| x.column(k).dot(&x.column(k)) / n).collect();
    let mut beta = opts.warm_start.clone().unwrap_or_else(|| Array1::zeros(q));
    for k in 0..q {
        if col_sq[k] == 0.0 {
            beta[k] = 0.0;
        }
    }
    let mut resid = &y - &x.dot(&beta);

    let objective = |resid: &Array1<f64>, beta: &Array1<f64>| {
        resid.dot(resid) / n + 2.0 * lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    };
    let kkt_tol = kkt_tolerance(lambda);

    let mut iterations = 0;
    let mut max_delta = f64::INFINITY;
    let mut converged = false;
    let mut last_obj = objective(&resid, &beta);
    while iterations < opts.max_iters {
        iterations += 1;
        max_delta = 0.0;
        for k in 0..q {
            if col_sq[k] == 0.0 {
                continue;
            }
            let col = x.column(k);
            let old = beta[k];
            let z = col.dot(&resid) / n + col_sq[k] * old;
            let new = soft_threshold(z, lambda) / col_sq[k];
            let delta = new - old;
            if delta != 0.0 {
                resid.scaled_add(-delta, &col);
                beta[k] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if cfg!(debug_assertions) {
            let obj = objective(&resid, &beta);
            debug_assert!(
                obj <= last_obj + 1e-10 * last_obj.abs().max(1.0),
                "objective increased: {last_obj} -> {obj}"
            );
            last_obj = obj;
        }
        if max_delta <= opts.tol {
            let xty: Vec<f64> = (0..q).map(|k| x.column(k).dot(&y) / n).collect();
            let current = kkt_residual(problem, beta.view())?;
            if let Some(polished) = polish_active_set(
                q,
                |i, j| x.column(i).dot(&x.column(j)) / n,
                &xty,
                lambda,
                beta.as_slice().expect("contiguous"),
            ) {
                let polished = Array1::from(polished);
                if kkt_residual(problem, polished.view())? < current {
                    beta = polished;
                    resid = &y - &x.dot(&beta);
                }
            }
            if kkt_residual(problem, beta.view())? <= kkt_tol {
                converged = true;
                break;
            }
        }
    }
    let objective_value = objective(&resid, &beta);
    Ok(LassoSolution {
        residual_sq: resid.dot(&resid) / n,
        coefficients: beta,
        iterations,
        final_max_delta: max_delta,
        objective: objective_value,
        converged,
    })
}

/// `‖y − Xγ‖²/n` from second moments, given the gradient `g = Xᵀy/n − Gγ`.
fn gram_residual_sq(problem: &GramProblem<'_>, beta: &Array1<f64>, grad: &Array1<f64>) -> f64 {
    // yᵀy/n − 2γᵀc + γᵀGγ with Gγ = c − g.
    let bc = beta.dot(&problem.xty);
    let bg = beta.dot(grad);
    (problem.yty - bc - bg).max(0.0)
}

/// Lasso by cyclic coordinate descent on the Gram matrix ("covariance updates").
pub fn solve_lasso_gram(problem: &GramProblem<'_>, opts: &SolverOptions) -> Result<LassoSolution> {
    problem.validate()?;
    let gram = problem.gram;
    let q = problem.xty.len();
    opts.validate(q)?;
    let lambda = problem.penalty;

    let mut beta = opts.warm_start.clone().unwrap_or_else(|| Array1::zeros(q));
    for k in 0..q {
        if gram[(k, k)] <= 0.0 {
            beta[k] = 0.0;
        }
    }
    let mut grad = &problem.xty - &gram.dot(&beta);

    let objective = |beta: &Array1<f64>, grad: &Array1<f64>| {
        gram_residual_sq(problem, beta, grad) + 2.0 * lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    };
    let kkt_tol = kkt_tolerance(lambda);

    let mut iterations = 0;
    let mut max_delta = f64::INFINITY;
    let mut converged = false;
    let mut last_obj = objective(&beta, &grad);
    while iterations < opts.max_iters {
        iterations += 1;
        max_delta = 0.0;
        for k in 0..q {
            let gkk = gram[(k, k)];
            if gkk <= 0.0 {
                continue;
            }
            let old = beta[k];
            let z = grad[k] + gkk * old;
            let new = soft_threshold(z, lambda) / gkk;
            let delta = new - old;
            if delta != 0.0 {
                grad.scaled_add(-delta, &gram.column(k));
                beta[k] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if cfg!(debug_assertions) {
            let obj = objective(&beta, &grad);
            debug_assert!(
                obj <= last_obj + 1e-10 * last_obj.abs().max(1.0),
                "objective increased: {last_obj} -> {obj}"
            );
            last_obj = obj;
        }
        if max_delta <= opts.tol {
            let current = kkt_residual_gram(problem, beta.view());
            if let Some(polished) =
                polish_active_set(q, |i, j| gram[(i, j)], &problem.xty.to_vec(), lambda, &beta.to_vec())
            {
                let polished = Array1::from(polished);
                if kkt_residual_gram(problem, polished.view()) < current {
                    beta = polished;
                    grad = &problem.xty - &gram.dot(&beta);
                }
            }
            if kkt_residual_gram(problem, beta.view()) <= kkt_tol {
                converged = true;
                break;
            }
        }
    }
    Ok(LassoSolution {
        residual_sq: gram_residual_sq(problem, &beta, &grad),
        objective: objective(&beta, &grad),
        coefficients: beta,
        iterations,
        final_max_delta: max_delta,
        converged,
    })
}

const SQRT_LASSO_MAX_OUTER: usize = 50;
const RESIDUAL_FLOOR: f64 = 1e-10;

/// Alternating minimization over `(γ, σ)`: a Lasso step at penalty `λ₀σ̂`,
/// then `σ̂ ← ‖y − Xγ̂‖/√n`, until `σ̂` stabilizes.
fn sqrt_lasso_outer(
    lambda0: f64,
    initial_scale: f64,
    opts: &SolverOptions,
    mut inner: impl FnMut(f64, &SolverOptions) -> Result<LassoSolution>,
) -> Result<LassoSolution> {
    if !(lambda0 >= 0.0) || !lambda0.is_finite() {
        return Err(Error::Domain(format!(
            "λ₀ must be finite and nonnegative, got {lambda0}"
        )));
    }
    if lambda0 == 0.0 {
        let mut sol = inner(0.0, opts)?;
        sol.objective = sol.residual_scale();
        return Ok(sol);
    }
    let mut sigma = initial_scale;
    if sigma < RESIDUAL_FLOOR {
        return Err(Error::DegenerateFit(format!(
            "response scale {sigma:e} is numerically zero"
        )));
    }
    let mut inner_opts = opts.clone();
    let mut total_iters = 0;
    let mut last: Option<LassoSolution> = None;
    let mut outer_converged = false;
    for _ in 0..SQRT_LASSO_MAX_OUTER {
        let sol = inner(lambda0 * sigma, &inner_opts)?;
        total_iters += sol.iterations;
        let next = sol.residual_scale();
        if next < RESIDUAL_FLOOR {
            return Err(Error::DegenerateFit(format!(
                "residual scale {next:e} collapsed; response lies in the column span"
            )));
        }
        let change = (next - sigma).abs();
        sigma = next;
        inner_opts.warm_start = Some(sol.coefficients.clone());
        let inner_ok = sol.converged;
        last = Some(sol);
        if change <= opts.tol * sigma.max(1.0) && inner_ok {
            outer_converged = true;
            break;
        }
    }
    let mut sol = last.expect("at least one outer iteration");
    // Leave γ̂ consistent with the final σ̂.
    if outer_converged {
        let refined = inner(lambda0 * sigma, &inner_opts)?;
        total_iters += refined.iterations;
        sol = refined;
    }
    let l1: f64 = sol.coefficients.iter().map(|b| b.abs()).sum();
    sol.objective = sol.residual_scale() + lambda0 * l1;
    sol.iterations = total_iters;
    sol.converged = outer_converged && sol.converged;
    Ok(sol)
}

/// Square-root Lasso `‖y − Xγ‖/√n + λ₀‖γ‖₁`; `problem.penalty` is λ₀.
pub fn solve_sqrt_lasso(problem: &LassoProblem<'_>, opts: &SolverOptions) -> Result<LassoSolution> {
    problem.validate()?;
    let n = problem.design.nrows() as f64;
    let scale = (problem.response.dot(&problem.response) / n).sqrt();
    let initial = match &opts.warm_start {
        Some(w) => {
            let r = &problem.response - &problem.design.dot(w);
            (r.dot(&r) / n).sqrt()
        }
        None => scale,
    };
    sqrt_lasso_outer(problem.penalty, initial, opts, |penalty, o| {
        solve_lasso(&LassoProblem { penalty, ..*problem }, o)
    })
}

/// [`solve_sqrt_lasso`] in Gram form; `problem.penalty` is λ₀.
pub fn solve_sqrt_lasso_gram(problem: &GramProblem<'_>, opts: &SolverOptions) -> Result<LassoSolution> {
    problem.validate()?;
    let initial = match &opts.warm_start {
        Some(w) => {
            let grad = &problem.xty - &problem.gram.dot(w);
            gram_residual_sq(problem, w, &grad).sqrt()
        }
        None => problem.yty.max(0.0).sqrt(),
    };
    sqrt_lasso_outer(problem.penalty, initial, opts, |penalty, o| {
        solve_lasso_gram(&GramProblem { penalty, ..*problem }, o)
    })
}
