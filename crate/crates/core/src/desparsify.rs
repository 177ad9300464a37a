//! De-sparsified estimator, variance estimates, confidence intervals and
//! thresholded edge selection.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nodewise::PrecisionEstimate;
use crate::numerics::{max_abs, std_normal_quantile, DesignMatrix, SymMatrix};

/// Relative asymmetry tolerated in the raw closed form before symmetrizing.
const ASYMMETRY_TOL: f64 = 1e-10;

/// Floor applied to negative plug-in variances from [`variance_empirical`].
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// `T̂ = Θ̂ + Θ̂ᵀ − Θ̂ᵀΣ̂Θ̂`, with links to the inputs it was built from.
#[derive(Debug, Clone)]
pub struct DesparsifiedEstimate<'a> {
    pub t_hat: SymMatrix,
    pub source: &'a PrecisionEstimate,
    pub sigma_hat: &'a SymMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceKind {
    /// `σ̂²_ij = Θ̂_iiΘ̂_jj + Θ̂_ij²`, valid under Gaussian rows.
    GaussianPlugin,
    /// `σ̂²_ij = (1/n)Σ_k (Θ̂_iᵀX_kX_kᵀΘ̂_j)² − Θ̂_ij²`.
    Empirical,
}

impl std::fmt::Display for VarianceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VarianceKind::GaussianPlugin => "gaussian-plugin",
            VarianceKind::Empirical => "empirical",
        })
    }
}

impl std::str::FromStr for VarianceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-plugin" | "gaussian" => Ok(VarianceKind::GaussianPlugin),
            "empirical" => Ok(VarianceKind::Empirical),
            other => Err(Error::Config(format!("unknown variance kind '{other}'"))),
        }
    }
}

/// Entrywise asymptotic standard deviations `σ̂_ij` (not variances).
#[derive(Debug, Clone)]
pub struct VarianceEstimate {
    pub sigma: Array2<f64>,
    pub kind: VarianceKind,
    /// How many unordered entries were floored at [`VARIANCE_FLOOR`].
    pub floored: usize,
}

/// Entrywise intervals `T̂_ij ± Φ⁻¹(1 − α/2)·σ̂_ij/√n`.
#[derive(Debug, Clone)]
pub struct ConfidenceRegion {
    pub lower: Array2<f64>,
    pub upper: Array2<f64>,
    pub alpha: f64,
    pub n: usize,
}

impl ConfidenceRegion {
    pub fn contains(&self, i: usize, j: usize, value: f64) -> bool {
        self.lower[(i, j)] <= value && value <= self.upper[(i, j)]
    }

    pub fn width(&self, i: usize, j: usize) -> f64 {
        self.upper[(i, j)] - self.lower[(i, j)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ThresholdKind {
    /// `σ̂_ij √(2ν log p / n)`.
    Nu { nu: f64 },
    /// `Φ⁻¹(1 − α/(2p²)) σ̂_ij / √n`.
    Bonferroni { alpha: f64, quantile: f64 },
}

#[derive(Debug, Clone)]
pub struct ThresholdRule {
    pub kind: ThresholdKind,
    pub thresholds: Array2<f64>,
}

/// Entries whose de-sparsified value strictly exceeds its threshold.
#[derive(Debug, Clone)]
pub struct EdgeSelection {
    /// Off-diagonal pairs `(i, j)` with `i < j`, in row-major order.
    pub selected: Vec<(usize, usize)>,
    pub diagonal: Vec<bool>,
    pub rule: ThresholdRule,
}

impl EdgeSelection {
    pub fn is_selected(&self, i: usize, j: usize) -> bool {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => self.diagonal[i],
            std::cmp::Ordering::Less => self.selected.binary_search(&(i, j)).is_ok(),
            std::cmp::Ordering::Greater => self.selected.binary_search(&(j, i)).is_ok(),
        }
    }

    /// Selected entries counted as ordered pairs, diagonal included.
    pub fn ordered_count(&self) -> usize {
        2 * self.selected.len() + self.diagonal.iter().filter(|&&d| d).count()
    }
}

fn check_dims(est: &PrecisionEstimate, sigma_hat: &SymMatrix) -> Result<()> {
    if est.dim() != sigma_hat.dim() {
        return Err(Error::Dimension(format!(
            "estimate is {0}x{0} but Σ̂ is {1}x{1}",
            est.dim(),
            sigma_hat.dim()
        )));
    }
    Ok(())
}

/// De-sparsified estimator `T̂ = Θ̂ + Θ̂ᵀ − Θ̂ᵀΣ̂Θ̂`.
pub fn desparsify<'a>(est: &'a PrecisionEstimate, sigma_hat: &'a SymMatrix) -> Result<DesparsifiedEstimate<'a>> {
    check_dims(est, sigma_hat)?;
    let theta = &est.theta;
    let quad = theta.t().dot(&sigma_hat.as_array().dot(theta));
    let raw = theta + &theta.t() - &quad;
    if let Some(((row, col), _)) = raw.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { row, col });
    }
    let scale = max_abs(&raw).max(max_abs(&quad)).max(1.0);
    let asym = max_abs(&(&raw - &raw.t()));
    if asym > ASYMMETRY_TOL * scale {
        return Err(Error::InvalidEstimate(format!(
            "de-sparsified matrix is asymmetric by {asym:e} (scale {scale:e})"
        )));
    }
    Ok(DesparsifiedEstimate {
        t_hat: SymMatrix::symmetrized(&raw)?,
        source: est,
        sigma_hat,
    })
}

fn sym_entry(theta: &Array2<f64>, i: usize, j: usize) -> f64 {
    0.5 * (theta[(i, j)] + theta[(j, i)])
}

/// Gaussian plug-in `σ̂_ij = √(Θ̂_iiΘ̂_jj + Θ̂_ij²)`, with `Θ̂_ij` symmetrized.
pub fn variance_gaussian(est: &PrecisionEstimate) -> Result<VarianceEstimate> {
    let theta = &est.theta;
    let p = est.dim();
    if let Some(j) = (0..p).find(|&j| !(theta[(j, j)] > 0.0)) {
        return Err(Error::InvalidEstimate(format!(
            "diagonal entry {j} is {} (must be positive)",
            theta[(j, j)]
        )));
    }
    let mut sigma = Array2::zeros((p, p));
    for i in 0..p {
        for j in i..p {
            let t = sym_entry(theta, i, j);
            let v = (theta[(i, i)] * theta[(j, j)] + t * t).sqrt();
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    Ok(VarianceEstimate {
        sigma,
        kind: VarianceKind::GaussianPlugin,
        floored: 0,
    })
}

/// Empirical `σ̂²_ij = (1/n)Σ_k (Θ̂_iᵀX_kX_kᵀΘ̂_j)² − Θ̂_ij²`, floored at
/// [`VARIANCE_FLOOR`].
///
/// Projections `W_ki = Θ̂_iᵀX_k` are accumulated in column order of `X`, and
/// each sum over `k` runs in row order.
pub fn variance_empirical(est: &PrecisionEstimate, x: &DesignMatrix) -> Result<VarianceEstimate> {
    let p = est.dim();
    if x.p() != p {
        return Err(Error::Dimension(format!(
            "design has {} columns, estimate is {p}x{p}",
            x.p()
        )));
    }
    let n = x.n();
    let xv = x.view();
    let theta = &est.theta;
    let mut w = Array2::<f64>::zeros((n, p));
    for k in 0..n {
        for i in 0..p {
            let mut s = 0.0;
            for l in 0..p {
                s += theta[(l, i)] * xv[(k, l)];
            }
            w[(k, i)] = s;
        }
    }
    let mut sigma = Array2::zeros((p, p));
    let mut floored = 0;
    for i in 0..p {
        for j in i..p {
            let mut s = 0.0;
            for k in 0..n {
                let t = w[(k, i)] * w[(k, j)];
                s += t * t;
            }
            let t = sym_entry(theta, i, j);
            let mut var = s / n as f64 - t * t;
            if var < VARIANCE_FLOOR {
                var = VARIANCE_FLOOR;
                floored += 1;
            }
            let v = var.sqrt();
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    if floored > 0 {
        log::warn!("empirical variance floored at {VARIANCE_FLOOR:e} for {floored} entries");
    }
    Ok(VarianceEstimate {
        sigma,
        kind: VarianceKind::Empirical,
        floored,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_same_dim(t: &DesparsifiedEstimate<'_>, v: &VarianceEstimate) -> Result<()> {
    if t.t_hat.dim() != v.sigma.nrows() {
        return Err(Error::Dimension(format!(
            "T̂ is {0}x{0} but σ̂ is {1}x{1}",
            t.t_hat.dim(),
            v.sigma.nrows()
        )));
    }
    Ok(())
}

/// Entrywise `(1 − α)` confidence intervals.
pub fn confidence_intervals(
    t: &DesparsifiedEstimate<'_>,
    v: &VarianceEstimate,
    n: usize,
    alpha: f64,
) -> Result<ConfidenceRegion> {
    check_alpha(alpha)?;
    check_same_dim(t, v)?;
    if n == 0 {
        return Err(Error::Domain("sample size must be positive".into()));
    }
    let z = std_normal_quantile(1.0 - alpha / 2.0)?;
    let half = v.sigma.mapv(|s| z * s / (n as f64).sqrt());
    let t_hat = t.t_hat.as_array();
    Ok(ConfidenceRegion {
        lower: t_hat - &half,
        upper: t_hat + &half,
        alpha,
        n,
    })
}

fn select_with(t: &DesparsifiedEstimate<'_>, thresholds: Array2<f64>, kind: ThresholdKind) -> EdgeSelection {
    let t_hat = t.t_hat.as_array();
    let p = t_hat.nrows();
    let diagonal = (0..p).map(|i| t_hat[(i, i)].abs() > thresholds[(i, i)]).collect();
    let selected = (0..p)
        .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
        .filter(|&(i, j)| t_hat[(i, j)].abs() > thresholds[(i, j)])
        .collect();
    EdgeSelection {
        selected,
        diagonal,
        rule: ThresholdRule { kind, thresholds },
    }
}

/// Keeps `(i, j)` when `|T̂_ij| > σ̂_ij √(2ν log p / n)`.
pub fn threshold_select(
    t: &DesparsifiedEstimate<'_>,
    v: &VarianceEstimate,
    n: usize,
    p: usize,
    nu: f64,
) -> Result<EdgeSelection> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Domain(format!("ν must be positive, got {nu}")));
    }
    check_same_dim(t, v)?;
    if n == 0 || p < 2 {
        return Err(Error::Domain(format!("need n >= 1 and p >= 2, got n={n}, p={p}")));
    }
    let factor = (2.0 * nu * (p as f64).ln() / n as f64).sqrt();
    let thresholds = v.sigma.mapv(|s| s * factor);
    Ok(select_with(t, thresholds, ThresholdKind::Nu { nu }))
}

/// Keeps `(i, j)` when `|T̂_ij| > Φ⁻¹(1 − α/(2p²)) σ̂_ij / √n`.
pub fn bonferroni_select(
    t: &DesparsifiedEstimate<'_>,
    v: &VarianceEstimate,
    n: usize,
    p: usize,
    alpha: f64,
) -> Result<EdgeSelection> {
    check_alpha(alpha)?;
    check_same_dim(t, v)?;
    if n == 0 || p == 0 {
        return Err(Error::Domain(format!("need n >= 1 and p >= 1, got n={n}, p={p}")));
    }
    let pf = p as f64;
    let quantile = std_normal_quantile(1.0 - alpha / (2.0 * pf * pf))?;
    let root_n = (n as f64).sqrt();
    let thresholds = v.sigma.mapv(|s| quantile * s / root_n);
    Ok(select_with(
        t,
        thresholds,
        ThresholdKind::Bonferroni { alpha, quantile },
    ))
}

/// `Δ = √n(T̂ − Θ₀) + √n Θ₀(Σ̂ − Σ₀)Θ₀`, the part of the error not
/// explained by the linear pivot term. Needs the true model.
pub fn remainder_decomposition(
    t: &DesparsifiedEstimate<'_>,
    theta0: &SymMatrix,
    sigma_hat: &SymMatrix,
    sigma0: &SymMatrix,
    n: usize,
) -> Result<Array2<f64>> {
    let p = t.t_hat.dim();
    for (name, d) in [("Θ₀", theta0.dim()), ("Σ̂", sigma_hat.dim()), ("Σ₀", sigma0.dim())] {
        if d != p {
            return Err(Error::Dimension(format!("{name} is {d}x{d}, expected {p}x{p}")));
        }
    }
    let th0 = theta0.as_array();
    let diff = sigma_hat.as_array() - sigma0.as_array();
    let pivot = th0.dot(&diff.dot(th0));
    let root_n = (n as f64).sqrt();
    Ok((t.t_hat.as_array() - th0 + &pivot) * root_n)
}
