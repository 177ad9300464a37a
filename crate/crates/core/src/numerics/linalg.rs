//! Dense symmetric matrix kernels.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// An n×p observation matrix; rows are samples, columns variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix(Array2<f64>);

impl DesignMatrix {
    /// Wraps `data`, rejecting empty or non-finite matrices.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Domain(
                "design matrix must have at least one row and one column".into(),
            ));
        }
        if let Some(((row, col), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Self(data))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn p(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// A real symmetric matrix. Symmetry is exact: `a[(i, j)] == a[(j, i)]` bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Array2<f64>);

impl SymMatrix {
    /// Accepts `a` only if it is square and exactly symmetric.
    pub fn new(a: Array2<f64>) -> Result<Self> {
        check_square(&a)?;
        let p = a.nrows();
        for i in 0..p {
            for j in (i + 1)..p {
                if a[(i, j)] != a[(j, i)] {
                    return Err(Error::Domain(format!(
                        "matrix is not symmetric at ({i}, {j}): {} vs {}",
                        a[(i, j)],
                        a[(j, i)]
                    )));
                }
            }
        }
        Ok(Self(a))
    }

    /// Builds `(a + aᵀ)/2`.
    pub fn symmetrized(a: &Array2<f64>) -> Result<Self> {
        check_square(a)?;
        let p = a.nrows();
        let mut out = Array2::zeros((p, p));
        for i in 0..p {
            out[(i, i)] = a[(i, i)];
            for j in (i + 1)..p {
                let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(Self(out))
    }

    pub fn identity(p: usize) -> Self {
        Self(Array2::eye(p))
    }

    pub fn from_diag(d: &[f64]) -> Self {
        Self(Array2::from_diag(&Array1::from(d.to_vec())))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

fn check_square(a: &Array2<f64>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "expected a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Lower Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: Array2<f64>,
}

impl SpdFactor {
    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        self.lower.dot(&self.lower.t())
    }

    /// Solves `A x = b` in place by forward and back substitution.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let l = &self.lower;
        let p = l.nrows();
        for i in 0..p {
            let mut s = b[i];
            for k in 0..i {
                s -= l[(i, k)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
        for i in (0..p).rev() {
            let mut s = b[i];
            for k in (i + 1)..p {
                s -= l[(k, i)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
    }

    /// `A⁻¹`, symmetrized so the result is exactly symmetric.
    pub fn inverse(&self) -> SymMatrix {
        let p = self.dim();
        let mut inv = Array2::zeros((p, p));
        let mut col = vec![0.0; p];
        for j in 0..p {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..p {
                inv[(i, j)] = col[i];
            }
        }
        SymMatrix::symmetrized(&inv).expect("square by construction")
    }
}

/// Cholesky factorization of a symmetric positive definite matrix.
///
/// A pivot at or below `1e-12 · max diagonal` is treated as a loss of
/// positive definiteness and reported with its index.
pub fn cholesky(a: &SymMatrix) -> Result<SpdFactor> {
    cholesky_view(a.view())
}

pub(crate) fn cholesky_view(a: ArrayView2<'_, f64>) -> Result<SpdFactor> {
    let p = a.nrows();
    let max_diag = (0..p).map(|i| a[(i, i)]).fold(0.0f64, f64::max);
    let floor = 1e-12 * max_diag;
    let mut l = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(SpdFactor { lower: l })
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Ascending.
    pub values: Array1<f64>,
    /// Orthonormal; column k pairs with `values[k]`.
    pub vectors: Array2<f64>,
}

/// Cyclic Jacobi eigenvalue iteration.
pub fn sym_eigen(a: &SymMatrix) -> Result<SymEigen> {
    let p = a.dim();
    if let Some(((row, col), _)) = a.as_array().indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { row, col });
    }
    let mut m = a.as_array().clone();
    let mut v = Array2::<f64>::eye(p);
    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();

    for _sweep in 0..100 {
        let off: f64 = (0..p)
            .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * frob || frob == 0.0 {
            break;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                let aij = m[(i, j)];
                if aij == 0.0 {
                    continue;
                }
                let theta = (m[(j, j)] - m[(i, i)]) / (2.0 * aij);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let mki = m[(k, i)];
                    let mkj = m[(k, j)];
                    m[(k, i)] = c * mki - s * mkj;
                    m[(k, j)] = s * mki + c * mkj;
                }
                for k in 0..p {
                    let mik = m[(i, k)];
                    let mjk = m[(j, k)];
                    m[(i, k)] = c * mik - s * mjk;
                    m[(j, k)] = s * mik + c * mjk;
                }
                for k in 0..p {
                    let vki = v[(k, i)];
                    let vkj = v[(k, j)];
                    v[(k, i)] = c * vki - s * vkj;
                    v[(k, j)] = s * vki + c * vkj;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| m[(x, x)].total_cmp(&m[(y, y)]));
    let values = Array1::from_iter(order.iter().map(|&k| m[(k, k)]));
    let vectors = v.select(Axis(1), &order);
    Ok(SymEigen { values, vectors })
}

/// Symmetric positive semi-definite square root `V diag(√λ) Vᵀ`.
///
/// Eigenvalues in `[-1e-10·‖a‖, 0]` are clamped to zero; anything more
/// negative is a domain error.
pub fn sym_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eigen(a)?;
    let norm = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = -1e-10 * norm;
    let p = a.dim();
    let mut roots = Array1::zeros(p);
    for (k, &lam) in eig.values.iter().enumerate() {
        if lam < floor {
            return Err(Error::Domain(format!(
                "matrix is not positive semi-definite (eigenvalue {lam:e})"
            )));
        }
        roots[k] = lam.max(0.0).sqrt();
    }
    let scaled = &eig.vectors * &roots.view().insert_axis(Axis(0));
    let root = scaled.dot(&eig.vectors.t());
    SymMatrix::symmetrized(&root)
}

/// `XᵀX / n`, without centering.
pub fn sample_covariance(x: &DesignMatrix) -> SymMatrix {
    let xv = x.view();
    let n = x.n() as f64;
    let gram = xv.t().dot(&xv) / n;
    SymMatrix::symmetrized(&gram).expect("square by construction")
}

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
pub fn spd_inverse(a: &SymMatrix) -> Result<SymMatrix> {
    Ok(cholesky(a)?.inverse())
}
