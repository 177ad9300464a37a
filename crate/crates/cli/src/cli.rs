//! Argument parsing and subcommand dispatch.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use precis::desparsify::{
    bonferroni_select, confidence_intervals, desparsify, threshold_select, variance_empirical, variance_gaussian,
    EdgeSelection, VarianceEstimate, VarianceKind,
};
use precis::experiments::{collect_standardized_stats, run_coverage, run_selection, ExperimentConfig, LambdaRule};
use precis::lasso::SolverOptions;
use precis::nodewise::{nodewise_lasso_cov, PrecisionEstimate};
use precis::numerics::sample_covariance;
use precis::simgen::{build_ground_truth, parse_key_values, sample_size_rule, seeded_stream, ModelSpec};
use precis::SymMatrix;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::io::{self, center_columns, format_f64, load_csv, Dataset, DatasetOptions};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::pipeline::realdata_pipeline;

#[derive(Debug, Parser)]
#[command(
    name = "precis",
    version,
    about = "De-sparsified nodewise Lasso for precision matrices"
)]
pub struct Cli {
    /// Worker threads; 0 or unset uses one per core.
    #[arg(long, global = true, env = "PRECIS_THREADS")]
    pub threads: Option<usize>,
    /// Directory for output files and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit Θ̂ and the de-sparsified T̂ (theta.csv, t_hat.csv).
    Estimate(EstimateArgs),
    /// Entrywise confidence intervals (t_hat.csv, sd.csv, lower.csv, upper.csv).
    Ci(CiArgs),
    /// Thresholded edge selection (edges.csv).
    Select(SelectArgs),
    /// Monte Carlo coverage and length of the intervals (coverage.json, coverage.txt).
    SimulateCoverage(SimArgs),
    /// Monte Carlo true and false positives of selection (selection.json, selection.txt).
    SimulateSelection(SimArgs),
    /// Standardized statistics for chosen entries, one row per replication (histogram.csv).
    Histogram(HistogramArgs),
    /// Edge selection on observational data (edges.csv, summary.json).
    Edges(EdgesArgs),
    /// Rerun a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV file, one row per observation.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// The first row holds column names.
    #[arg(long)]
    pub header: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// `auto` for the tuning rule, or a fixed penalty.
    #[arg(long, default_value = "auto")]
    pub lambda: LambdaRule,
    /// Subtract column means before fitting.
    #[arg(long)]
    pub center: bool,
}

#[derive(Debug, Args)]
pub struct CiArgs {
    #[command(flatten)]
    pub estimate: EstimateArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// `gaussian-plugin` or `empirical`.
    #[arg(long, default_value = "gaussian-plugin")]
    pub variance: VarianceKind,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub estimate: EstimateArgs,
    /// Threshold multiplier in σ̂√(2ν log p / n).
    #[arg(long, default_value_t = 1.0, conflicts_with = "bonferroni")]
    pub nu: f64,
    /// Use the Φ⁻¹(1 − α/(2p²)) threshold instead.
    #[arg(long)]
    pub bonferroni: bool,
    #[arg(long, default_value_t = 0.05, requires = "bonferroni")]
    pub alpha: f64,
    #[arg(long, default_value = "gaussian-plugin")]
    pub variance: VarianceKind,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// `key=value` file; flags below override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Band values `ρ₀,ρ₁,ρ₂`.
    #[arg(long)]
    pub model: Option<String>,
    /// Row sparsity for the default sample size; the model's own by default.
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Replications.
    #[arg(long = "N")]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub variance: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    /// `gaussian` or `subgaussian-uniform`.
    #[arg(long)]
    pub design: Option<String>,
    /// Half-width of the uniform perturbation of off-diagonal entries.
    #[arg(long)]
    pub perturb: Option<f64>,
    #[arg(long)]
    pub perturb_seed: Option<u64>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// Also write per-entry coverage and length matrices.
    #[arg(long)]
    pub per_entry: bool,
}

#[derive(Debug, Args)]
pub struct HistogramArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// 1-based entries, `i,j` separated by `;`.
    #[arg(long, default_value = "1,1;1,2;1,3")]
    pub entries: String,
}

#[derive(Debug, Args)]
pub struct EdgesArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Keep this many highest-variance columns [default: min(500, p)].
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Rows set aside to estimate column scales.
    #[arg(long, default_value_t = 10)]
    pub split: usize,
    #[arg(long)]
    pub no_center: bool,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Seed for the choice of split rows.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Drops the program name and the global flags, leaving what a manifest
/// needs to rerun the command.
fn command_argv(args: &[OsString]) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned());
    while let Some(a) = it.next() {
        if a == "--threads" || a == "--out-dir" {
            it.next();
        } else if !(a.starts_with("--threads=") || a.starts_with("--out-dir=")) {
            out.push(a);
        }
    }
    out
}

struct Run {
    command: &'static str,
    argv: Vec<String>,
    out_dir: PathBuf,
    threads: usize,
    seed: Option<u64>,
    config: BTreeMap<String, String>,
    outputs: Vec<String>,
    started: Instant,
}

impl Run {
    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out_dir.join(name)
    }

    fn set(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    fn finish(self) -> Result<()> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            argv: self.argv,
            cwd: std::env::current_dir().map_err(|e| CliError::io(".", e))?,
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: self.threads,
            seed: self.seed,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            config: self.config,
            outputs: self.outputs,
        };
        io::write_text(&self.out_dir.join(MANIFEST_FILE), &manifest.to_text())
    }
}

fn execute(cli: Cli, args: &[OsString]) -> Result<()> {
    if let Command::Replay(r) = &cli.command {
        return replay(&cli, &r.manifest);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", cli.threads.unwrap_or(0))))?;
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| CliError::io(&cli.out_dir, e))?;
    let command = match &cli.command {
        Command::Estimate(_) => "estimate",
        Command::Ci(_) => "ci",
        Command::Select(_) => "select",
        Command::SimulateCoverage(_) => "simulate-coverage",
        Command::SimulateSelection(_) => "simulate-selection",
        Command::Histogram(_) => "histogram",
        Command::Edges(_) => "edges",
        Command::Replay(_) => unreachable!(),
    };
    let mut run = Run {
        command,
        argv: command_argv(args),
        out_dir: cli.out_dir.clone(),
        threads: pool.current_num_threads(),
        seed: None,
        config: BTreeMap::new(),
        outputs: Vec::new(),
        started: Instant::now(),
    };
    log::info!("{command} on {} threads", run.threads);
    pool.install(|| match &cli.command {
        Command::Estimate(a) => estimate(a, &mut run),
        Command::Ci(a) => ci(a, &mut run),
        Command::Select(a) => select(a, &mut run),
        Command::SimulateCoverage(a) => simulate_coverage(a, &mut run),
        Command::SimulateSelection(a) => simulate_selection(a, &mut run),
        Command::Histogram(a) => histogram(a, &mut run),
        Command::Edges(a) => edges(a, &mut run),
        Command::Replay(_) => unreachable!(),
    })?;
    run.finish()
}

fn replay(cli: &Cli, manifest_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| CliError::io(manifest_path, e))?;
    let manifest = RunManifest::parse(&text)?;
    if manifest.argv.first().map(String::as_str) == Some("replay") {
        return Err(CliError::Data("a replay manifest cannot be replayed".into()));
    }
    let mut args: Vec<OsString> = vec!["precis".into(), "--out-dir".into(), cli.out_dir.clone().into()];
    if let Some(t) = cli.threads {
        args.push("--threads".into());
        args.push(t.to_string().into());
    }
    let mut it = manifest.argv.iter();
    while let Some(a) = it.next() {
        args.push(a.into());
        let path_flag = matches!(a.as_str(), "--input" | "--config");
        if let (true, Some(v)) = (path_flag, it.clone().next()) {
            it.next();
            args.push(manifest.cwd.join(v).into());
        } else if let Some(v) = a.strip_prefix("--input=").or_else(|| a.strip_prefix("--config=")) {
            let flag = &a[..a.len() - v.len()];
            args.pop();
            args.push(format!("{flag}{}", manifest.cwd.join(v).display()).into());
        }
    }
    let cli = Cli::try_parse_from(&args).map_err(|e| CliError::Data(format!("manifest argv does not parse: {e}")))?;
    execute(cli, &args)
}

fn load_input(input: &InputArgs, center: bool, run: &mut Run) -> Result<Dataset> {
    if !input.delimiter.is_ascii() {
        return Err(CliError::Usage(format!(
            "delimiter must be a single ASCII character, got '{}'",
            input.delimiter
        )));
    }
    let opts = DatasetOptions {
        path: input.input.clone(),
        delimiter: input.delimiter as u8,
        has_header: input.header,
        ..DatasetOptions::default()
    };
    run.set("input", input.input.display());
    run.set("delimiter", input.delimiter);
    run.set("header", input.header);
    let mut data = load_csv(&opts)?;
    if center {
        let mut x = data.x.into_inner();
        center_columns(&mut x);
        data.x = precis::DesignMatrix::new(x)?;
    }
    Ok(data)
}

struct Fit {
    data: Dataset,
    sigma_hat: SymMatrix,
    estimate: PrecisionEstimate,
}

fn fit(a: &EstimateArgs, run: &mut Run) -> Result<Fit> {
    let data = load_input(&a.input, a.center, run)?;
    let (n, p) = (data.x.n(), data.x.p());
    let lambda = a.lambda.resolve(n, p)?;
    run.set("center", a.center);
    run.set("lambda", a.lambda);
    run.set("lambda_value", lambda);
    run.set("n", n);
    run.set("p", p);
    let sigma_hat = sample_covariance(&data.x);
    let estimate = nodewise_lasso_cov(&sigma_hat, &vec![lambda; p], &SolverOptions::default())?;
    Ok(Fit {
        data,
        sigma_hat,
        estimate,
    })
}

fn variance(kind: VarianceKind, fit: &Fit) -> Result<VarianceEstimate> {
    let v = match kind {
        VarianceKind::GaussianPlugin => variance_gaussian(&fit.estimate)?,
        VarianceKind::Empirical => variance_empirical(&fit.estimate, &fit.data.x)?,
    };
    if v.floored > 0 {
        log::warn!("{} variance estimates were floored", v.floored);
    }
    Ok(v)
}

fn estimate(a: &EstimateArgs, run: &mut Run) -> Result<()> {
    let f = fit(a, run)?;
    let t = desparsify(&f.estimate, &f.sigma_hat)?;
    io::write_matrix_csv(&run.path("theta.csv"), &f.data.names, f.estimate.theta.view())?;
    io::write_matrix_csv(&run.path("t_hat.csv"), &f.data.names, t.t_hat.view())
}

fn ci(a: &CiArgs, run: &mut Run) -> Result<()> {
    let f = fit(&a.estimate, run)?;
    run.set("alpha", a.alpha);
    run.set("variance", a.variance);
    let t = desparsify(&f.estimate, &f.sigma_hat)?;
    let v = variance(a.variance, &f)?;
    let region = confidence_intervals(&t, &v, f.data.x.n(), a.alpha)?;
    let names = &f.data.names;
    io::write_matrix_csv(&run.path("t_hat.csv"), names, t.t_hat.view())?;
    io::write_matrix_csv(&run.path("sd.csv"), names, v.sigma.view())?;
    io::write_matrix_csv(&run.path("lower.csv"), names, region.lower.view())?;
    io::write_matrix_csv(&run.path("upper.csv"), names, region.upper.view())
}

/// Rows `i,j,name_i,name_j,t_hat,threshold` with 1-based positions.
fn edge_rows(sel: &EdgeSelection, names: &[String], t_hat: &ndarray::Array2<f64>) -> Vec<Vec<String>> {
    sel.selected
        .iter()
        .map(|&(i, j)| {
            vec![
                (i + 1).to_string(),
                (j + 1).to_string(),
                names[i].clone(),
                names[j].clone(),
                format_f64(t_hat[(i, j)]),
                format_f64(sel.rule.thresholds[(i, j)]),
            ]
        })
        .collect()
}

const EDGE_HEADER: [&str; 6] = ["i", "j", "name_i", "name_j", "t_hat", "threshold"];

fn select(a: &SelectArgs, run: &mut Run) -> Result<()> {
    let f = fit(&a.estimate, run)?;
    run.set("variance", a.variance);
    let t = desparsify(&f.estimate, &f.sigma_hat)?;
    let v = variance(a.variance, &f)?;
    let (n, p) = (f.data.x.n(), f.data.x.p());
    let sel = if a.bonferroni {
        run.set("rule", "bonferroni");
        run.set("alpha", a.alpha);
        bonferroni_select(&t, &v, n, p, a.alpha)?
    } else {
        run.set("rule", "nu");
        run.set("nu", a.nu);
        threshold_select(&t, &v, n, p, a.nu)?
    };
    let rows = edge_rows(&sel, &f.data.names, t.t_hat.as_array());
    io::write_table_csv(&run.path("edges.csv"), &EDGE_HEADER, &rows)
}

/// Merges the config file with flag overrides into an experiment config.
fn experiment_config(a: &SimArgs, default_nu: Option<f64>) -> Result<ExperimentConfig> {
    let mut map = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            parse_key_values(&text)?
        }
        None => BTreeMap::new(),
    };
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    };
    put("p", a.p.map(|v| v.to_string()));
    put("rho", a.model.clone());
    put("n", a.n.map(|v| v.to_string()));
    put("replications", a.replications.map(|v| v.to_string()));
    put("seed", a.seed.map(|v| v.to_string()));
    put("alpha", a.alpha.map(|v| v.to_string()));
    put("variance", a.variance.clone());
    put("lambda", a.lambda.clone());
    put("design", a.design.clone());
    put("perturb", a.perturb.map(|v| v.to_string()));
    put("perturb_seed", a.perturb_seed.map(|v| v.to_string()));
    put("nu", a.nu.map(|v| v.to_string()));
    if a.per_entry {
        map.insert("per_entry".into(), "true".into());
    }
    if let Some(nu) = default_nu {
        map.entry("nu".into()).or_insert_with(|| nu.to_string());
    }
    if !map.contains_key("n") {
        let model = ModelSpec::from_map(&map)?;
        let s = match a.s {
            Some(s) => s,
            None => build_ground_truth(&model)?.s,
        };
        map.insert("n".into(), sample_size_rule(s, model.p)?.to_string());
    }
    Ok(ExperimentConfig::from_map(&map)?)
}

fn record_config(run: &mut Run, config: &ExperimentConfig) -> Result<()> {
    run.seed = Some(config.master_seed);
    for (k, v) in parse_key_values(&config.to_config())? {
        run.config.insert(k, v);
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn simulate_coverage(a: &SimArgs, run: &mut Run) -> Result<()> {
    let config = experiment_config(a, None)?;
    record_config(run, &config)?;
    let report = run_coverage(&config)?;
    io::write_text(&run.path("coverage.json"), &to_json(&report))?;
    io::write_text(&run.path("coverage.txt"), &report.to_text())?;
    if let (Some(cov), Some(len)) = (&report.coverage, &report.length) {
        let names: Vec<String> = (1..=config.model.p).map(|k| format!("V{k}")).collect();
        io::write_matrix_csv(&run.path("coverage_matrix.csv"), &names, cov.view())?;
        io::write_matrix_csv(&run.path("length_matrix.csv"), &names, len.view())?;
    }
    Ok(())
}

fn simulate_selection(a: &SimArgs, run: &mut Run) -> Result<()> {
    let config = experiment_config(a, Some(1.0))?;
    record_config(run, &config)?;
    let report = run_selection(&config)?;
    io::write_text(&run.path("selection.json"), &to_json(&report))?;
    io::write_text(&run.path("selection.txt"), &report.to_text())
}

/// Parses `"1,1;1,2"` into 0-based pairs.
pub fn parse_entries(s: &str) -> Result<Vec<(usize, usize)>> {
    let bad = |part: &str| CliError::Usage(format!("entry '{part}' is not of the form i,j with 1-based i and j"));
    s.split(';')
        .map(str::trim)
        .filter(|part| !part.is_empty())
        .map(|part| {
            let (i, j) = part.split_once(',').ok_or_else(|| bad(part))?;
            let i: usize = i.trim().parse().map_err(|_| bad(part))?;
            let j: usize = j.trim().parse().map_err(|_| bad(part))?;
            if i == 0 || j == 0 {
                return Err(bad(part));
            }
            Ok((i - 1, j - 1))
        })
        .collect::<Result<Vec<_>>>()
        .and_then(|v| if v.is_empty() { Err(bad(s)) } else { Ok(v) })
}

fn histogram(a: &HistogramArgs, run: &mut Run) -> Result<()> {
    let entries = parse_entries(&a.entries)?;
    let config = experiment_config(&a.sim, None)?;
    record_config(run, &config)?;
    run.set("entries", &a.entries);
    let stats = collect_standardized_stats(&config, &entries)?;
    let mut header = vec!["replication".to_string()];
    header.extend(entries.iter().map(|(i, j)| format!("z_{}_{}", i + 1, j + 1)));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..config.replications)
        .map(|r| {
            std::iter::once(r.to_string())
                .chain(stats.iter().map(|s| format_f64(s[r])))
                .collect()
        })
        .collect();
    io::write_table_csv(&run.path("histogram.csv"), &header, &rows)
}

#[derive(Serialize)]
struct EdgesSummary<'a> {
    n_rows: usize,
    n_used: usize,
    p_input: usize,
    kept_columns: Vec<&'a str>,
    split_rows: Vec<usize>,
    lambda: f64,
    alpha: f64,
    quantile: f64,
    edge_count: usize,
}

fn edges(a: &EdgesArgs, run: &mut Run) -> Result<()> {
    let data = load_input(&a.input, false, run)?;
    let p = data.x.p();
    let opts = DatasetOptions {
        path: a.input.input.clone(),
        top_k_by_variance: Some(a.top_k.unwrap_or(p.min(500))),
        variance_split_count: a.split,
        center: !a.no_center,
        ..DatasetOptions::default()
    };
    run.seed = Some(a.seed);
    run.set("top_k", opts.top_k_by_variance.unwrap_or(p));
    run.set("split", a.split);
    run.set("center", opts.center);
    run.set("alpha", a.alpha);
    let result = realdata_pipeline(&data, &opts, a.alpha, &mut seeded_stream(a.seed, 0))?;
    let rows = edge_rows(&result.selection, &result.names, &result.t_hat);
    io::write_table_csv(&run.path("edges.csv"), &EDGE_HEADER, &rows)?;
    let summary = EdgesSummary {
        n_rows: data.x.n(),
        n_used: result.n_used,
        p_input: p,
        kept_columns: result.names.iter().map(String::as_str).collect(),
        split_rows: result.split_rows.iter().map(|r| r + 1).collect(),
        lambda: result.lambda,
        alpha: a.alpha,
        quantile: result.quantile,
        edge_count: result.edges.len(),
    };
    io::write_text(&run.path("summary.json"), &to_json(&summary))
}
