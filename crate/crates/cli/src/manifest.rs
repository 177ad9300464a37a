//! Plain-text record of a run.
//!
//! One `key=value` per line:
//!
//! ```text
//! command=simulate-coverage
//! argv=["simulate-coverage","--p","100","--N","300"]
//! cwd=/home/user/runs
//! version=0.1.0
//! threads=8
//! seed=7
//! wall_clock_seconds=12.5
//! config.p=100
//! config.rho=1,0.3,0
//! output=coverage.json
//! output=coverage.txt
//! ```
//!
//! `argv` is a JSON array of the subcommand and its arguments, without the
//! global `--threads` and `--out-dir` flags. `seed` is present only for
//! seeded commands. `output` lines name files relative to the output
//! directory, in the order they were written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub cwd: PathBuf,
    pub version: String,
    pub threads: usize,
    pub seed: Option<u64>,
    pub wall_clock_seconds: f64,
    /// Effective settings after defaults and config files are applied.
    pub config: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command={}", self.command);
        let _ = writeln!(
            out,
            "argv={}",
            serde_json::to_string(&self.argv).expect("strings serialize")
        );
        let _ = writeln!(out, "cwd={}", self.cwd.display());
        let _ = writeln!(out, "version={}", self.version);
        let _ = writeln!(out, "threads={}", self.threads);
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed={seed}");
        }
        let _ = writeln!(out, "wall_clock_seconds={}", self.wall_clock_seconds);
        for (k, v) in &self.config {
            let _ = writeln!(out, "config.{k}={v}");
        }
        for o in &self.outputs {
            let _ = writeln!(out, "output={o}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        let mut config = BTreeMap::new();
        let mut outputs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || CliError::Data(format!("manifest line {}: expected key=value", lineno + 1));
            let (k, v) = line.split_once('=').ok_or_else(bad)?;
            if let Some(key) = k.strip_prefix("config.") {
                config.insert(key.to_string(), v.to_string());
            } else if k == "output" {
                outputs.push(v.to_string());
            } else if fields.insert(k, v).is_some() {
                return Err(CliError::Data(format!(
                    "manifest line {}: duplicate key '{k}'",
                    lineno + 1
                )));
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| CliError::Data(format!("manifest is missing '{k}'")))
        };
        let invalid = |k: &str| CliError::Data(format!("manifest has an invalid '{k}'"));
        let argv: Vec<String> = serde_json::from_str(get("argv")?).map_err(|_| invalid("argv"))?;
        Ok(Self {
            command: get("command")?.to_string(),
            argv,
            cwd: PathBuf::from(get("cwd")?),
            version: get("version")?.to_string(),
            threads: get("threads")?.parse().map_err(|_| invalid("threads"))?,
            seed: fields
                .get("seed")
                .map(|s| s.parse())
                .transpose()
                .map_err(|_| invalid("seed"))?,
            wall_clock_seconds: get("wall_clock_seconds")?
                .parse()
                .map_err(|_| invalid("wall_clock_seconds"))?,
            config,
            outputs,
        })
    }
}
