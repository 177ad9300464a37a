//! CSV ingestion and output.
//!
//! Inputs are rectangular numeric tables. Outputs use RFC 4180 quoting, `.`
//! as the decimal point, and the shortest decimal string that parses back
//! to the same `f64`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use precis::DesignMatrix;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub path: PathBuf,
    pub delimiter: u8,
    pub has_header: bool,
    /// Keep only this many highest-variance columns; `None` keeps all.
    pub top_k_by_variance: Option<usize>,
    /// Rows set aside to estimate the column scales.
    pub variance_split_count: usize,
    pub center: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            path: PathBuf::new(),
            delimiter: b',',
            has_header: false,
            top_k_by_variance: Some(500),
            variance_split_count: 10,
            center: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// Column names from the header, or `V1`, `V2`, ... without one.
    pub names: Vec<String>,
    pub x: DesignMatrix,
}

pub fn load_csv(opts: &DatasetOptions) -> Result<Dataset> {
    let file = File::open(&opts.path).map_err(|e| CliError::io(&opts.path, e))?;
    parse_csv(file, opts.delimiter, opts.has_header).map_err(|e| match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", opts.path.display())),
        other => other,
    })
}

pub fn parse_csv<R: Read>(reader: R, delimiter: u8, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut names: Option<Vec<String>> = if has_header {
        let h = rdr.headers().map_err(csv_error)?;
        if h.is_empty() || (h.len() == 1 && h[0].is_empty()) {
            return Err(CliError::Data("empty file".into()));
        }
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut values = Vec::new();
    let mut rows = 0usize;
    let mut width = names.as_ref().map(Vec::len);
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(CliError::Data(format!(
                    "line {line}: expected {w} fields, found {}",
                    record.len()
                )));
            }
            None => width = Some(record.len()),
            _ => {}
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!(
                    "line {line}, column {}: cannot parse '{cell}' as a number",
                    col + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "line {line}, column {}: non-finite value '{cell}'",
                    col + 1
                )));
            }
            values.push(v);
        }
        rows += 1;
    }
    let p = match width {
        Some(p) if rows > 0 => p,
        _ => return Err(CliError::Data("no data rows".into())),
    };
    let names = names
        .take()
        .unwrap_or_else(|| (1..=p).map(|k| format!("V{k}")).collect());
    let x = Array2::from_shape_vec((rows, p), values).expect("row widths checked");
    Ok(Dataset {
        names,
        x: DesignMatrix::new(x)?,
    })
}

fn csv_error(e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line());
    match line {
        Some(l) => CliError::Data(format!("line {l}: {e}")),
        None => CliError::Data(e.to_string()),
    }
}

/// Subtracts each column's mean.
pub fn center_columns(x: &mut Array2<f64>) {
    let n = x.nrows() as f64;
    for mut col in x.columns_mut() {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
    }
}

pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

/// Writes a matrix with a header row of column names.
pub fn write_matrix_csv(path: &Path, names: &[String], m: ArrayView2<'_, f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    w.write_record(names).map_err(io_err)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|&v| format_f64(v))).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes string rows under a header.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row).map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| CliError::io(path, e))
}
