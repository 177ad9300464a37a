//! Monte Carlo harness: empirical coverage and length of the confidence
//! intervals, true/false positives of thresholded selection, and samples of
//! the standardized statistic.
//!
//! Replication `r` draws its data from stream `r` of `master_seed`. Work is
//! spread over the ambient rayon pool, but per-replication results are
//! always reduced in replication order, so reports are bitwise identical at
//! any thread count.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::desparsify::{
    confidence_intervals, desparsify, remainder_decomposition, threshold_select, variance_empirical, variance_gaussian,
    DesparsifiedEstimate, VarianceEstimate, VarianceKind,
};
use crate::error::{Error, Result};
use crate::lasso::SolverOptions;
use crate::nodewise::{nodewise_lasso_cov, tuning_lambda, PrecisionEstimate};
use crate::numerics::{sample_covariance, std_normal_cdf, std_normal_quantile, DesignMatrix, SymMatrix};
use crate::simgen::{
    build_ground_truth, parse_field, parse_key_values, parse_value, seeded_stream, GroundTruth, ModelSpec,
};

/// Replications evaluated concurrently before their results are folded in.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    /// `λ = B/√(n − 1 + B²)`, `B = qt(1 − ŝ/(2p), n − 1)`, `ŝ = √n/log p`.
    Auto,
    Fixed(f64),
}

impl LambdaRule {
    pub fn resolve(&self, n: usize, p: usize) -> Result<f64> {
        match *self {
            LambdaRule::Auto => tuning_lambda(n, p),
            LambdaRule::Fixed(l) => Ok(l),
        }
    }
}

impl fmt::Display for LambdaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaRule::Auto => f.write_str("auto"),
            LambdaRule::Fixed(l) => write!(f, "{l}"),
        }
    }
}

impl std::str::FromStr for LambdaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(LambdaRule::Auto);
        }
        let l: f64 = parse_value(s, "lambda")?;
        if !(l >= 0.0) || !l.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be 'auto' or a nonnegative number, got '{s}'"
            )));
        }
        Ok(LambdaRule::Fixed(l))
    }
}

impl Serialize for LambdaRule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub replications: usize,
    pub alpha: f64,
    pub variance_kind: VarianceKind,
    pub lambda_rule: LambdaRule,
    pub selection_nu: Option<f64>,
    pub master_seed: u64,
    /// Keep the per-entry coverage and length matrices in the report.
    pub per_entry: bool,
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec, n: usize, replications: usize) -> Self {
        Self {
            model,
            n,
            replications,
            alpha: 0.05,
            variance_kind: VarianceKind::GaussianPlugin,
            lambda_rule: LambdaRule::Auto,
            selection_nu: None,
            master_seed: 0,
            per_entry: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if self.model.p < 2 {
            return Err(Error::Config("p must be at least 2".into()));
        }
        if let Some(nu) = self.selection_nu {
            if !(nu > 0.0) {
                return Err(Error::Config(format!("nu must be positive, got {nu}")));
            }
        }
        Ok(())
    }

    /// `key=value` form: the model keys plus `n`, `replications`, `alpha`,
    /// `variance`, `lambda`, `seed`, and optionally `nu` and `per_entry`.
    pub fn to_config(&self) -> String {
        let mut out = self.model.to_config();
        let _ = writeln!(out, "n={}", self.n);
        let _ = writeln!(out, "replications={}", self.replications);
        let _ = writeln!(out, "alpha={}", self.alpha);
        let _ = writeln!(out, "variance={}", self.variance_kind);
        let _ = writeln!(out, "lambda={}", self.lambda_rule);
        if let Some(nu) = self.selection_nu {
            let _ = writeln!(out, "nu={nu}");
        }
        let _ = writeln!(out, "seed={}", self.master_seed);
        if self.per_entry {
            let _ = writeln!(out, "per_entry=true");
        }
        out
    }

    pub fn from_config(text: &str) -> Result<Self> {
        let map = parse_key_values(text)?;
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let model = ModelSpec::from_map(map)?;
        let get = |k: &str| map.get(k).map(String::as_str);
        let config = Self {
            model,
            n: parse_field(map, "n")?,
            replications: parse_field(map, "replications")?,
            alpha: get("alpha")
                .map(|v| parse_value(v, "alpha"))
                .transpose()?
                .unwrap_or(0.05),
            variance_kind: get("variance")
                .map(str::parse)
                .transpose()?
                .unwrap_or(VarianceKind::GaussianPlugin),
            lambda_rule: get("lambda").map(str::parse).transpose()?.unwrap_or(LambdaRule::Auto),
            selection_nu: get("nu").map(|v| parse_value(v, "nu")).transpose()?,
            master_seed: get("seed").map(|v| parse_value(v, "seed")).transpose()?.unwrap_or(0),
            per_entry: get("per_entry")
                .map(|v| parse_value(v, "per_entry"))
                .transpose()?
                .unwrap_or(false),
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    pub avgcov_s0: f64,
    pub avglen_s0: f64,
    pub avgcov_s0c: f64,
    pub avglen_s0c: f64,
    pub s0_size: usize,
    pub lambda: f64,
    pub config: ExperimentConfig,
    /// `α̂_ij`.
    #[serde(skip)]
    pub coverage: Option<Array2<f64>>,
    /// `ℓ̂_ij`.
    #[serde(skip)]
    pub length: Option<Array2<f64>>,
}

impl CoverageReport {
    /// Aligned-column summary.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "model five-diag({}, {}, {}) p={} n={} N={} alpha={} variance={} lambda={:.6} seed={}",
            c.model.rho[0],
            c.model.rho[1],
            c.model.rho[2],
            c.model.p,
            c.n,
            c.replications,
            c.alpha,
            c.variance_kind,
            self.lambda,
            c.master_seed
        );
        let _ = writeln!(out, "{:<8} {:>10} {:>10} {:>8}", "set", "avgcov", "avglength", "size");
        let p = c.model.p;
        let _ = writeln!(
            out,
            "{:<8} {:>10.4} {:>10.4} {:>8}",
            "S0", self.avgcov_s0, self.avglen_s0, self.s0_size
        );
        let _ = writeln!(
            out,
            "{:<8} {:>10.4} {:>10.4} {:>8}",
            "S0c",
            self.avgcov_s0c,
            self.avglen_s0c,
            p * p - self.s0_size
        );
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub tp: f64,
    pub fp: f64,
    pub tp_rate: f64,
    pub fp_rate: f64,
    pub s0_size: usize,
    pub lambda: f64,
    pub tp_per_replication: Vec<usize>,
    pub fp_per_replication: Vec<usize>,
    pub config: ExperimentConfig,
}

impl SelectionReport {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "model five-diag({}, {}, {}) p={} n={} N={} nu={} lambda={:.6} seed={}",
            c.model.rho[0],
            c.model.rho[1],
            c.model.rho[2],
            c.model.p,
            c.n,
            c.replications,
            c.selection_nu.unwrap_or(f64::NAN),
            self.lambda,
            c.master_seed
        );
        let _ = writeln!(
            out,
            "{:>8} {:>10} {:>10} {:>10} {:>10}",
            "|S0|", "TP", "TP rate %", "FP", "FP rate %"
        );
        let _ = writeln!(
            out,
            "{:>8} {:>10.2} {:>10.3} {:>10.2} {:>10.3}",
            self.s0_size, self.tp, self.tp_rate, self.fp, self.fp_rate
        );
        out
    }
}

/// Everything one replication produces on the way to an interval.
pub struct Replication {
    pub x: DesignMatrix,
    pub sigma_hat: SymMatrix,
    pub estimate: PrecisionEstimate,
    pub lambda: f64,
}

impl Replication {
    pub fn desparsified(&self) -> Result<DesparsifiedEstimate<'_>> {
        desparsify(&self.estimate, &self.sigma_hat)
    }

    pub fn variance(&self, kind: VarianceKind) -> Result<VarianceEstimate> {
        match kind {
            VarianceKind::GaussianPlugin => variance_gaussian(&self.estimate),
            VarianceKind::Empirical => variance_empirical(&self.estimate, &self.x),
        }
    }
}

/// Samples replication `r` and fits the nodewise Lasso to it.
pub fn fit_replication(config: &ExperimentConfig, gt: &GroundTruth, r: usize) -> Result<Replication> {
    let mut rng = seeded_stream(config.master_seed, r as u64);
    let x = gt.sample(config.n, &mut rng);
    let sigma_hat = sample_covariance(&x);
    let lambda = config.lambda_rule.resolve(config.n, gt.p())?;
    let estimate = nodewise_lasso_cov(&sigma_hat, &vec![lambda; gt.p()], &SolverOptions::default())?;
    Ok(Replication {
        x,
        sigma_hat,
        estimate,
        lambda,
    })
}

fn tag_replication(config: &ExperimentConfig, r: usize, e: Error) -> Error {
    Error::Replication {
        replication: r,
        seed: config.master_seed,
        source: Box::new(e),
    }
}

/// Runs `f` on every replication and returns the results in replication
/// order. The first failure aborts the run, tagged with its index and seed.
pub fn map_replications<T, F>(config: &ExperimentConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let mut out = Vec::with_capacity(config.replications);
    for start in (0..config.replications).step_by(CHUNK) {
        let end = (start + CHUNK).min(config.replications);
        let chunk: Vec<T> = (start..end)
            .into_par_iter()
            .map(|r| f(r).map_err(|e| tag_replication(config, r, e)))
            .collect::<Result<_>>()?;
        out.extend(chunk);
    }
    Ok(out)
}

/// Sums per-replication matrix pairs in replication order, one chunk at a
/// time so memory stays bounded.
fn chunked_fold<F>(config: &ExperimentConfig, p: usize, f: F) -> Result<(Array2<f64>, Array2<f64>)>
where
    F: Fn(usize) -> Result<(Array2<f64>, Array2<f64>)> + Sync,
{
    let mut sum_a = Array2::zeros((p, p));
    let mut sum_b = Array2::zeros((p, p));
    for start in (0..config.replications).step_by(CHUNK) {
        let end = (start + CHUNK).min(config.replications);
        let partial: Vec<_> = (start..end)
            .into_par_iter()
            .map(|r| f(r).map_err(|e| tag_replication(config, r, e)))
            .collect::<Result<_>>()?;
        for (a, b) in partial {
            sum_a += &a;
            sum_b += &b;
        }
    }
    Ok((sum_a, sum_b))
}

/// Coverage and length of the intervals, with `adjust` applied to each
/// replication's variance estimate before the intervals are built.
pub fn run_coverage_with<A>(config: &ExperimentConfig, adjust: A) -> Result<CoverageReport>
where
    A: Fn(&mut VarianceEstimate) + Sync,
{
    config.validate()?;
    let gt = build_ground_truth(&config.model)?;
    let p = gt.p();
    let lambda = config.lambda_rule.resolve(config.n, p)?;
    let theta0 = gt.theta0.as_array();

    let (hits, lengths) = chunked_fold(config, p, |r| {
        let rep = fit_replication(config, &gt, r)?;
        let t = rep.desparsified()?;
        let mut v = rep.variance(config.variance_kind)?;
        adjust(&mut v);
        let ci = confidence_intervals(&t, &v, config.n, config.alpha)?;
        let covered = Array2::from_shape_fn(
            (p, p),
            |(i, j)| if ci.contains(i, j, theta0[(i, j)]) { 1.0 } else { 0.0 },
        );
        let width = &ci.upper - &ci.lower;
        Ok((covered, width))
    })?;

    let reps = config.replications as f64;
    let coverage = hits / reps;
    let length = lengths / reps;
    let mut acc = [0.0f64; 4];
    let mut count = [0usize; 2];
    for ((i, j), &c) in coverage.indexed_iter() {
        let k = if gt.in_support(i, j) { 0 } else { 1 };
        acc[2 * k] += c;
        acc[2 * k + 1] += length[(i, j)];
        count[k] += 1;
    }
    let mean = |s: f64, c: usize| if c == 0 { f64::NAN } else { s / c as f64 };
    Ok(CoverageReport {
        avgcov_s0: mean(acc[0], count[0]),
        avglen_s0: mean(acc[1], count[0]),
        avgcov_s0c: mean(acc[2], count[1]),
        avglen_s0c: mean(acc[3], count[1]),
        s0_size: count[0],
        lambda,
        config: config.clone(),
        coverage: config.per_entry.then(|| coverage.clone()),
        length: config.per_entry.then(|| length.clone()),
    })
}

/// Empirical coverage `α̂_ij` and mean length `ℓ̂_ij`, averaged over `S₀`
/// and its complement (ordered pairs, diagonal in `S₀`).
pub fn run_coverage(config: &ExperimentConfig) -> Result<CoverageReport> {
    run_coverage_with(config, |_| {})
}

/// Thresholded selection at `ν = config.selection_nu` with the Gaussian
/// plug-in variance; true and false positives count ordered pairs.
pub fn run_selection(config: &ExperimentConfig) -> Result<SelectionReport> {
    config.validate()?;
    let nu = config
        .selection_nu
        .ok_or_else(|| Error::Config("selection experiments need nu".into()))?;
    let gt = build_ground_truth(&config.model)?;
    let p = gt.p();
    let lambda = config.lambda_rule.resolve(config.n, p)?;

    let counts = map_replications(config, |r| {
        let rep = fit_replication(config, &gt, r)?;
        let t = rep.desparsified()?;
        let v = variance_gaussian(&rep.estimate)?;
        let sel = threshold_select(&t, &v, config.n, p, nu)?;
        let mut tp = 0;
        let mut fp = 0;
        for i in 0..p {
            for j in 0..p {
                if sel.is_selected(i, j) {
                    if gt.in_support(i, j) {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
        }
        Ok((tp, fp))
    })?;

    let s0_size = gt.s0_size();
    let null_size = p * p - s0_size;
    let reps = config.replications as f64;
    let tp = counts.iter().map(|c| c.0 as f64).sum::<f64>() / reps;
    let fp = counts.iter().map(|c| c.1 as f64).sum::<f64>() / reps;
    Ok(SelectionReport {
        tp,
        fp,
        tp_rate: 100.0 * tp / s0_size as f64,
        fp_rate: if null_size == 0 {
            0.0
        } else {
            100.0 * fp / null_size as f64
        },
        s0_size,
        lambda,
        tp_per_replication: counts.iter().map(|c| c.0).collect(),
        fp_per_replication: counts.iter().map(|c| c.1).collect(),
        config: config.clone(),
    })
}

/// `√n(T̂_ij − Θ⁰_ij)/σ̂_ij` for each requested entry, one value per
/// replication in replication order.
pub fn collect_standardized_stats(config: &ExperimentConfig, entries: &[(usize, usize)]) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let gt = build_ground_truth(&config.model)?;
    let p = gt.p();
    if let Some(&(i, j)) = entries.iter().find(|&&(i, j)| i >= p || j >= p) {
        return Err(Error::Config(format!("entry ({i}, {j}) out of range for p = {p}")));
    }
    let theta0 = gt.theta0.as_array();
    let root_n = (config.n as f64).sqrt();
    let per_rep = map_replications(config, |r| {
        let rep = fit_replication(config, &gt, r)?;
        let t = rep.desparsified()?;
        let v = rep.variance(config.variance_kind)?;
        Ok(entries
            .iter()
            .map(|&(i, j)| root_n * (t.t_hat[(i, j)] - theta0[(i, j)]) / v.sigma[(i, j)])
            .collect::<Vec<f64>>())
    })?;
    Ok((0..entries.len())
        .map(|e| per_rep.iter().map(|row| row[e]).collect())
        .collect())
}

/// Error norms of one replication against the true model.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ErrorNorms {
    /// `‖T̂ − Θ₀‖_∞` (entrywise max).
    pub t_sup: f64,
    /// `max_ij |Δ_ij|` from [`remainder_decomposition`].
    pub remainder_sup: f64,
    /// `max_j ‖Θ̂_j − Θ⁰_j‖₁`.
    pub theta_col_l1: f64,
}

pub fn run_error_norms(config: &ExperimentConfig) -> Result<Vec<ErrorNorms>> {
    config.validate()?;
    let gt = build_ground_truth(&config.model)?;
    let theta0 = gt.theta0.as_array();
    map_replications(config, |r| {
        let rep = fit_replication(config, &gt, r)?;
        let t = rep.desparsified()?;
        let delta = remainder_decomposition(&t, &gt.theta0, &rep.sigma_hat, &gt.sigma0, config.n)?;
        let t_sup = crate::simgen::max_abs_diff(t.t_hat.as_array(), theta0);
        let remainder_sup = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = &rep.estimate.theta - theta0;
        let theta_col_l1 = diff
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(ErrorNorms {
            t_sup,
            remainder_sup,
            theta_col_l1,
        })
    })
}

/// Kolmogorov distance `sup_x |F_m(x) − Φ(x)|` of a sample to the
/// standard normal.
pub fn ks_distance(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("Kolmogorov distance of an empty sample".into()));
    }
    let mut sorted = samples.to_vec();
    if sorted.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("sample contains NaN".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let mut d = 0.0f64;
    for (k, &x) in sorted.iter().enumerate() {
        let f = if x.is_finite() {
            std_normal_cdf(x)?
        } else if x > 0.0 {
            1.0
        } else {
            0.0
        };
        d = d.max((k + 1) as f64 / m - f).max(f - k as f64 / m);
    }
    Ok(d)
}

/// Half-width factor `Φ⁻¹(1 − α/2)` of the intervals.
pub fn interval_quantile(alpha: f64) -> Result<f64> {
    std_normal_quantile(1.0 - alpha / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_examples() {
        let m = 50;
        let grid: Vec<f64> = (1..=m)
            .map(|k| std_normal_quantile((k as f64 - 0.5) / m as f64).unwrap())
            .collect();
        assert!((ks_distance(&grid).unwrap() - 0.5 / m as f64).abs() < 1e-12);
        assert_eq!(ks_distance(&[0.0]).unwrap(), 0.5);
        let shifted: Vec<f64> = grid.iter().map(|x| x + 10.0).collect();
        assert!(ks_distance(&shifted).unwrap() > 0.99);
        assert!(ks_distance(&[]).is_err());
    }

    #[test]
    fn config_round_trip() {
        let mut c = ExperimentConfig::new(ModelSpec::new(30, [1.0, 0.3, 0.0]), 120, 7);
        c.selection_nu = Some(0.5);
        c.master_seed = 99;
        c.lambda_rule = LambdaRule::Fixed(0.25);
        c.variance_kind = VarianceKind::Empirical;
        let back = ExperimentConfig::from_config(&c.to_config()).unwrap();
        assert_eq!(back, c);
        assert!(ExperimentConfig::from_config("p=10\nrho=1,0.3,0\nn=50\nreplications=0").is_err());
        assert!(ExperimentConfig::from_config("p=10\nrho=1,0.3,0\nn=50\nreplications=3\nalpha=1.5").is_err());
    }

    #[test]
    fn selection_requires_nu() {
        let c = ExperimentConfig::new(ModelSpec::new(10, [1.0, 0.3, 0.0]), 100, 1);
        assert!(matches!(run_selection(&c), Err(Error::Config(_))));
    }

    #[test]
    fn huge_intervals_cover_everything() {
        let mut c = ExperimentConfig::new(ModelSpec::new(10, [1.0, 0.3, 0.0]), 100, 1);
        c.master_seed = 5;
        let rep = run_coverage_with(&c, |v| v.sigma.fill(1e12)).unwrap();
        assert_eq!(rep.avgcov_s0, 1.0);
        assert_eq!(rep.avgcov_s0c, 1.0);
    }

    #[test]
    fn standardized_stats_length() {
        let mut c = ExperimentConfig::new(ModelSpec::new(10, [1.0, 0.3, 0.0]), 80, 9);
        c.master_seed = 1;
        let stats = collect_standardized_stats(&c, &[(0, 0), (0, 1)]).unwrap();
        assert_eq!(stats.len(), 2);
        assert!(stats.iter().all(|s| s.len() == 9));
        assert!(collect_standardized_stats(&c, &[(0, 10)]).is_err());
    }
}
