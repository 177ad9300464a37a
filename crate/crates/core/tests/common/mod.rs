#![allow(dead_code)]

use ndarray::{Array1, Array2};
use precis::nodewise::{PrecisionEstimate, Variant};
use precis::simgen::{build_ground_truth, seeded_stream, GroundTruth, ModelSpec};
use precis::{DesignMatrix, SymMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn ground_truth(p: usize, rho: [f64; 3]) -> GroundTruth {
    build_ground_truth(&ModelSpec::new(p, rho)).expect("valid model")
}

pub fn s1(p: usize) -> GroundTruth {
    ground_truth(p, [1.0, 0.3, 0.0])
}

pub fn draw(gt: &GroundTruth, n: usize, seed: u64) -> DesignMatrix {
    let mut rng = seeded_stream(seed, 0);
    gt.sample(n, &mut rng)
}

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

pub fn normal_vector(len: usize, rng: &mut impl Rng) -> Array1<f64> {
    Array1::from_shape_simple_fn(len, || rng.sample(StandardNormal))
}

/// `BᵀB/p + shift·I` for Gaussian `B`.
pub fn random_spd(p: usize, shift: f64, rng: &mut impl Rng) -> SymMatrix {
    let b = normal_matrix(p, p, rng);
    let mut a = naive_matmul(&b.t().to_owned(), &b) / p as f64;
    for i in 0..p {
        a[(i, i)] += shift;
    }
    SymMatrix::symmetrized(&a).unwrap()
}

pub fn naive_matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, k) = a.dim();
    assert_eq!(k, b.nrows());
    let m = b.ncols();
    let mut c = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for l in 0..k {
                s += a[(i, l)] * b[(l, j)];
            }
            c[(i, j)] = s;
        }
    }
    c
}

/// Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &Array2<f64>) -> Array2<f64> {
    let p = a.nrows();
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(p);
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&x, &y| m[(x, col)].abs().total_cmp(&m[(y, col)].abs()))
            .unwrap();
        assert!(m[(pivot, col)].abs() > 1e-14, "singular matrix");
        for k in 0..p {
            m.swap((col, k), (pivot, k));
            inv.swap((col, k), (pivot, k));
        }
        let d = m[(col, col)];
        for k in 0..p {
            m[(col, k)] /= d;
            inv[(col, k)] /= d;
        }
        for r in 0..p {
            if r != col {
                let f = m[(r, col)];
                for k in 0..p {
                    m[(r, k)] -= f * m[(col, k)];
                    inv[(r, k)] -= f * inv[(col, k)];
                }
            }
        }
    }
    inv
}

/// `XᵀX/n` by explicit summation.
pub fn naive_covariance(x: &Array2<f64>) -> Array2<f64> {
    let (n, p) = x.dim();
    let mut s = Array2::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            let mut acc = 0.0;
            for k in 0..n {
                acc += x[(k, i)] * x[(k, j)];
            }
            s[(i, j)] = acc / n as f64;
        }
    }
    s
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// A [`PrecisionEstimate`] wrapping an arbitrary matrix, for exercising the
/// downstream steps in isolation.
pub fn estimate_from(theta: Array2<f64>) -> PrecisionEstimate {
    let p = theta.nrows();
    PrecisionEstimate {
        tau_sq: Array1::from_iter((0..p).map(|j| 1.0 / theta[(j, j)])),
        lambdas: Array1::zeros(p),
        gammas: vec![Array1::zeros(p - 1); p],
        theta,
        variant: Variant::Lasso,
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}
