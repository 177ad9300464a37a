//! Banded precision-matrix models and seeded samplers.
//!
//! Every random draw comes from a ChaCha8 stream addressed by
//! `(seed, stream)`, so replication `r` of an experiment always sees the
//! same data no matter which worker runs it or in what order.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky, sym_eigen, sym_sqrt, DesignMatrix, SpdFactor, SymMatrix};

/// Smallest admissible eigenvalue of a generated precision matrix.
pub const MIN_EIGENVALUE: f64 = 0.01;
const MAX_PERTURB_ATTEMPTS: u64 = 50;

/// Stream `stream` of the generator seeded with `seed`.
pub fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    /// Rows `N(0, Σ₀)`.
    Gaussian,
    /// Rows `Σ₀^{1/2} U` with `U` i.i.d. uniform on `[−√3, √3]`.
    SubgaussianUniform,
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DesignKind::Gaussian => "gaussian",
            DesignKind::SubgaussianUniform => "subgaussian-uniform",
        })
    }
}

impl std::str::FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(DesignKind::Gaussian),
            "subgaussian-uniform" | "subgaussian" | "uniform" => Ok(DesignKind::SubgaussianUniform),
            other => Err(Error::Config(format!("unknown design kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub half_width: f64,
    pub seed: u64,
}

/// A five-diagonal precision model, optionally with its nonzero
/// off-diagonal entries randomly perturbed once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub p: usize,
    pub rho: [f64; 3],
    pub perturb: Option<Perturbation>,
    pub design: DesignKind,
}

impl ModelSpec {
    pub fn new(p: usize, rho: [f64; 3]) -> Self {
        Self {
            p,
            rho,
            perturb: None,
            design: DesignKind::Gaussian,
        }
    }

    pub fn with_perturbation(mut self, half_width: f64, seed: u64) -> Self {
        self.perturb = Some(Perturbation { half_width, seed });
        self
    }

    pub fn with_design(mut self, design: DesignKind) -> Self {
        self.design = design;
        self
    }

    /// `key=value` lines: `p`, `rho`, `design`, and optionally
    /// `perturb` and `perturb_seed`.
    pub fn to_config(&self) -> String {
        let mut out = format!(
            "p={}\nrho={},{},{}\ndesign={}\n",
            self.p, self.rho[0], self.rho[1], self.rho[2], self.design
        );
        if let Some(pt) = &self.perturb {
            out.push_str(&format!("perturb={}\nperturb_seed={}\n", pt.half_width, pt.seed));
        }
        out
    }

    pub fn from_config(text: &str) -> Result<Self> {
        Self::from_map(&parse_key_values(text)?)
    }

    /// Reads the model keys from an already parsed `key=value` map; other
    /// keys are ignored.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let p = parse_field::<usize>(map, "p")?;
        let rho = parse_rho(required(map, "rho")?)?;
        let design = match map.get("design") {
            Some(v) => v.parse()?,
            None => DesignKind::Gaussian,
        };
        let perturb = match map.get("perturb") {
            Some(v) => Some(Perturbation {
                half_width: parse_value(v, "perturb")?,
                seed: match map.get("perturb_seed") {
                    Some(s) => parse_value(s, "perturb_seed")?,
                    None => 0,
                },
            }),
            None => None,
        };
        let spec = Self {
            p,
            rho,
            perturb,
            design,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::Config("p must be at least 1".into()));
        }
        if self.rho.iter().any(|r| !r.is_finite()) {
            return Err(Error::Config("rho entries must be finite".into()));
        }
        if let Some(pt) = &self.perturb {
            if !(pt.half_width > 0.0) || !pt.half_width.is_finite() {
                return Err(Error::Config(format!(
                    "perturbation half-width must be positive, got {}",
                    pt.half_width
                )));
            }
        }
        Ok(())
    }
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1)))?;
        let key = k.trim().to_string();
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
        }
    }
    Ok(map)
}

pub(crate) fn required<'m>(map: &'m BTreeMap<String, String>, key: &str) -> Result<&'m str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Config(format!("missing key '{key}'")))
}

pub(crate) fn parse_value<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
}

pub(crate) fn parse_field<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    parse_value(required(map, key)?, key)
}

/// Parses `"ρ₀,ρ₁,ρ₂"`.
pub fn parse_rho(v: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "rho needs three comma-separated values, got '{v}'"
        )));
    }
    let mut rho = [0.0; 3];
    for (r, s) in rho.iter_mut().zip(parts) {
        *r = parse_value(s, "rho")?;
    }
    Ok(rho)
}

/// The true model derived from a [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub theta0: SymMatrix,
    pub sigma0: SymMatrix,
    pub sigma0_sqrt: SymMatrix,
    pub sigma0_chol: SpdFactor,
    /// `support[(i, j)]` iff `Θ⁰_ij ≠ 0`.
    pub support: Array2<bool>,
    /// Maximum number of nonzeros in a row.
    pub s: usize,
    pub min_eigenvalue: f64,
    pub design: DesignKind,
}

impl GroundTruth {
    pub fn p(&self) -> usize {
        self.theta0.dim()
    }

    /// `|S₀|`, counted over ordered pairs with the diagonal.
    pub fn s0_size(&self) -> usize {
        self.support.iter().filter(|&&b| b).count()
    }

    pub fn in_support(&self, i: usize, j: usize) -> bool {
        self.support[(i, j)]
    }

    /// Draws `n` rows according to the model's design.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> DesignMatrix {
        match self.design {
            DesignKind::Gaussian => sample_gaussian(self, n, rng),
            DesignKind::SubgaussianUniform => sample_subgaussian_uniform(self, n, rng),
        }
    }
}

/// `Θ_ij = ρ₀, ρ₁, ρ₂` for `|i − j| = 0, 1, 2` and zero beyond.
pub fn five_diag(p: usize, rho0: f64, rho1: f64, rho2: f64) -> SymMatrix {
    let a = Array2::from_shape_fn((p, p), |(i, j)| match i.abs_diff(j) {
        0 => rho0,
        1 => rho1,
        2 => rho2,
        _ => 0.0,
    });
    SymMatrix::new(a).expect("banded construction is symmetric")
}

/// Adds one `U(−δ, δ)` draw to each nonzero off-diagonal pair, applied to
/// both `(i, j)` and `(j, i)`.
pub fn perturb_offdiag(theta: &SymMatrix, delta: f64, rng: &mut impl Rng) -> Result<SymMatrix> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!(
            "perturbation half-width must be positive, got {delta}"
        )));
    }
    let dist = Uniform::new(-delta, delta).map_err(|e| Error::Domain(e.to_string()))?;
    let mut a = theta.as_array().clone();
    let p = a.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            if a[(i, j)] != 0.0 {
                let v = a[(i, j)] + dist.sample(rng);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
    }
    SymMatrix::new(a)
}

fn min_eigenvalue(a: &SymMatrix) -> Result<f64> {
    Ok(sym_eigen(a)?.values[0])
}

/// Builds `Θ₀`, `Σ₀ = Θ₀⁻¹`, `Σ₀^{1/2}`, and the support.
///
/// A perturbed model whose smallest eigenvalue falls to
/// [`MIN_EIGENVALUE`] or below is redrawn from the next stream, up to 50
/// times.
pub fn build_ground_truth(spec: &ModelSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let base = five_diag(spec.p, spec.rho[0], spec.rho[1], spec.rho[2]);
    let (theta0, lam_min) = match &spec.perturb {
        None => {
            let lam = min_eigenvalue(&base)?;
            if lam <= MIN_EIGENVALUE {
                return Err(Error::Model(format!(
                    "five-diag({}, {}, {}) at p={} has smallest eigenvalue {lam:.4} <= {MIN_EIGENVALUE}",
                    spec.rho[0], spec.rho[1], spec.rho[2], spec.p
                )));
            }
            (base, lam)
        }
        Some(pt) => {
            let mut found = None;
            for attempt in 0..MAX_PERTURB_ATTEMPTS {
                let mut rng = seeded_stream(pt.seed, attempt);
                let cand = perturb_offdiag(&base, pt.half_width, &mut rng)?;
                let lam = min_eigenvalue(&cand)?;
                if lam > MIN_EIGENVALUE {
                    found = Some((cand, lam));
                    break;
                }
            }
            found.ok_or_else(|| {
                Error::Model(format!(
                    "no positive definite perturbation found in {MAX_PERTURB_ATTEMPTS} draws"
                ))
            })?
        }
    };

    let sigma0 = cholesky(&theta0)?.inverse();
    let sigma0_sqrt = sym_sqrt(&sigma0)?;
    let sigma0_chol = cholesky(&sigma0)?;
    let support = theta0.as_array().mapv(|v| v != 0.0);
    let s = support
        .rows()
        .into_iter()
        .map(|r| r.iter().filter(|&&b| b).count())
        .max()
        .unwrap_or(0);
    Ok(GroundTruth {
        theta0,
        sigma0,
        sigma0_sqrt,
        sigma0_chol,
        support,
        s,
        min_eigenvalue: lam_min,
        design: spec.design,
    })
}

/// `n` rows `L z`, `z ~ N(0, I)`, `L` the Cholesky factor of `Σ₀`.
pub fn sample_gaussian(gt: &GroundTruth, n: usize, rng: &mut impl Rng) -> DesignMatrix {
    let p = gt.p();
    let z = Array2::from_shape_simple_fn((n, p), || StandardNormal.sample(rng));
    let x = z.dot(&gt.sigma0_chol.lower().t());
    DesignMatrix::new(x).expect("finite draws")
}

/// `n` rows `Σ₀^{1/2} u`, `u` i.i.d. uniform on `[−√3, √3]` (unit variance).
pub fn sample_subgaussian_uniform(gt: &GroundTruth, n: usize, rng: &mut impl Rng) -> DesignMatrix {
    let p = gt.p();
    let half = 3f64.sqrt();
    let dist = Uniform::new_inclusive(-half, half).expect("valid bounds");
    let u = Array2::from_shape_simple_fn((n, p), || dist.sample(rng));
    let x = u.dot(gt.sigma0_sqrt.as_array());
    DesignMatrix::new(x).expect("finite draws")
}

/// `⌈s² (ln p)²⌉`.
pub fn sample_size_rule(s: usize, p: usize) -> Result<usize> {
    if s == 0 || p < 2 {
        return Err(Error::Config(format!(
            "sample size rule needs s >= 1 and p >= 2, got s={s}, p={p}"
        )));
    }
    let l = (p as f64).ln();
    Ok(((s * s) as f64 * l * l).ceil() as usize)
}

/// Largest absolute entrywise difference `|a − b|`.
pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut m = 0.0f64;
    Zip::from(a).and(b).for_each(|x, y| m = m.max((x - y).abs()));
    m
}
