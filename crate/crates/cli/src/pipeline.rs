//! Edge selection on observational data.
//!
//! Steps: keep the highest-variance columns, estimate column scales on a
//! random subset of rows, rescale (and optionally center) the remaining
//! rows, then fit the nodewise Lasso at the tuning-rule penalty and keep
//! the pairs that pass the Bonferroni threshold.

use ndarray::{Array2, Axis};
use precis::desparsify::{bonferroni_select, desparsify, variance_gaussian, EdgeSelection};
use precis::lasso::SolverOptions;
use precis::nodewise::{nodewise_lasso_cov, tuning_lambda};
use precis::numerics::sample_covariance;
use precis::DesignMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::io::{center_columns, Dataset, DatasetOptions};

#[derive(Debug, Clone, Serialize)]
pub struct Edge {
    /// Positions among the kept columns.
    pub i: usize,
    pub j: usize,
    pub name_i: String,
    pub name_j: String,
    pub t_hat: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    /// Indices into the input columns, ascending.
    pub kept_columns: Vec<usize>,
    pub names: Vec<String>,
    /// Rows used only for the scale estimates, ascending.
    pub split_rows: Vec<usize>,
    pub n_used: usize,
    pub lambda: f64,
    pub quantile: f64,
    pub t_hat: Array2<f64>,
    pub selection: EdgeSelection,
    pub edges: Vec<Edge>,
}

/// Runs the pipeline with a random split of `opts.variance_split_count` rows.
pub fn realdata_pipeline(
    data: &Dataset,
    opts: &DatasetOptions,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<PipelineResult> {
    let n = data.x.n();
    check_split(n, opts.variance_split_count)?;
    let mut split = rand::seq::index::sample(rng, n, opts.variance_split_count).into_vec();
    split.sort_unstable();
    realdata_pipeline_with_split(data, opts, alpha, &split)
}

fn check_split(n: usize, split: usize) -> Result<()> {
    if split < 2 {
        return Err(CliError::Data(format!(
            "at least 2 rows are needed to estimate column scales, got {split}"
        )));
    }
    if split + 2 > n {
        return Err(CliError::Data(format!(
            "setting aside {split} of {n} rows leaves fewer than 2 for estimation"
        )));
    }
    Ok(())
}

fn column_variances(x: &Array2<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.columns()
        .into_iter()
        .map(|c| {
            let mean = c.sum() / n;
            c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .collect()
}

/// Columns with the `k` largest variances, ties broken by position, in
/// ascending order.
fn top_k_columns(x: &Array2<f64>, k: usize) -> Vec<usize> {
    let var = column_variances(x);
    let mut order: Vec<usize> = (0..var.len()).collect();
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Same as [`realdata_pipeline`] with the scale rows given explicitly.
pub fn realdata_pipeline_with_split(
    data: &Dataset,
    opts: &DatasetOptions,
    alpha: f64,
    split_rows: &[usize],
) -> Result<PipelineResult> {
    let full = data.x.as_array();
    let (n, p) = full.dim();
    check_split(n, split_rows.len())?;
    let mut split = split_rows.to_vec();
    split.sort_unstable();
    split.dedup();
    if split.len() != split_rows.len() || split.last().is_some_and(|&r| r >= n) {
        return Err(CliError::Data(format!("split rows must be distinct and below {n}")));
    }

    let k = match opts.top_k_by_variance {
        Some(k) if k > p => {
            return Err(CliError::Data(format!(
                "top-k of {k} exceeds the {p} available columns"
            )));
        }
        Some(k) if k < 2 => return Err(CliError::Data(format!("top-k must be at least 2, got {k}"))),
        Some(k) => k,
        None => p,
    };
    let kept = top_k_columns(full, k);
    let names: Vec<String> = kept.iter().map(|&c| data.names[c].clone()).collect();

    let scale_rows = full.select(Axis(0), &split).select(Axis(1), &kept);
    let rest: Vec<usize> = (0..n).filter(|r| split.binary_search(r).is_err()).collect();
    let mut x = full.select(Axis(0), &rest).select(Axis(1), &kept);
    let sd: Vec<f64> = column_variances(&scale_rows).into_iter().map(f64::sqrt).collect();
    if let Some(c) = sd.iter().position(|&s| !(s > 0.0)) {
        return Err(CliError::Data(format!(
            "column '{}' has zero variance in the scale-estimation rows",
            names[c]
        )));
    }
    for (mut col, &s) in x.columns_mut().into_iter().zip(sd.iter()) {
        col.mapv_inplace(|v| v / s);
    }
    if opts.center {
        center_columns(&mut x);
    }

    let n_used = x.nrows();
    let x = DesignMatrix::new(x)?;
    let lambda = tuning_lambda(n_used, k)?;
    let sigma_hat = sample_covariance(&x);
    let est = nodewise_lasso_cov(&sigma_hat, &vec![lambda; k], &SolverOptions::default())?;
    let t = desparsify(&est, &sigma_hat)?;
    let v = variance_gaussian(&est)?;
    let selection = bonferroni_select(&t, &v, n_used, k, alpha)?;
    let quantile = match selection.rule.kind {
        precis::desparsify::ThresholdKind::Bonferroni { quantile, .. } => quantile,
        _ => unreachable!("bonferroni rule"),
    };
    let edges = selection
        .selected
        .iter()
        .map(|&(i, j)| Edge {
            i,
            j,
            name_i: names[i].clone(),
            name_j: names[j].clone(),
            t_hat: t.t_hat[(i, j)],
            threshold: selection.rule.thresholds[(i, j)],
        })
        .collect();
    Ok(PipelineResult {
        kept_columns: kept,
        names,
        split_rows: split,
        n_used,
        lambda,
        quantile,
        t_hat: t.t_hat.into_inner(),
        selection,
        edges,
    })
}
