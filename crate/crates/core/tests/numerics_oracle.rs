//! Special functions and dense kernels against independent references.

mod common;

use approx::assert_relative_eq;
use ndarray::array;
use precis::numerics::{
    cholesky, ln_gamma, reg_inc_beta, sample_covariance, spd_inverse, std_normal_cdf, std_normal_quantile,
    student_t_cdf, student_t_quantile, sym_eigen, sym_sqrt,
};
use precis::simgen::five_diag;
use precis::{DesignMatrix, SymMatrix};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::{beta::beta_reg, gamma};

/// `Φ(x)` at 40 significant digits, rounded to the nearest double.
#[rustfmt::skip]
const PHI_TABLE: [(f64, f64); 73] = [
    (-8.0, 6.220960574271784e-16),
    (-7.75, 4.5946274357785954e-15),
    (-7.5, 3.1908916729108963e-14),
    (-7.25, 2.0838581586720695e-13),
    (-7.0, 1.279812543885835e-12),
    (-6.75, 7.392257778017822e-12),
    (-6.5, 4.016000583859118e-11),
    (-6.25, 2.0522634252189388e-10),
    (-6.0, 9.86587645037698e-10),
    (-5.75, 4.462172453901612e-09),
    (-5.5, 1.8989562465887718e-08),
    (-5.25, 7.604960516488715e-08),
    (-5.0, 2.866515718791939e-07),
    (-4.75, 1.0170832425687032e-06),
    (-4.5, 3.3976731247300603e-06),
    (-4.25, 1.068852577493442e-05),
    (-4.0, 3.1671241833119924e-05),
    (-3.75, 8.841728520080387e-05),
    (-3.5, 0.00023262907903552504),
    (-3.25, 0.000577025042390767),
    (-3.0, 0.0013498980316300946),
    (-2.75, 0.002979763235054557),
    (-2.5, 0.006209665325776135),
    (-2.25, 0.012224472655044703),
    (-2.0, 0.02275013194817921),
    (-1.75, 0.04005915686381709),
    (-1.5, 0.06680720126885807),
    (-1.25, 0.10564977366685525),
    (-1.0, 0.15865525393145705),
    (-0.75, 0.2266273523768682),
    (-0.5, 0.3085375387259869),
    (-0.25, 0.4012936743170763),
    (0.0, 0.5),
    (0.25, 0.5987063256829237),
    (0.5, 0.6914624612740131),
    (0.75, 0.7733726476231318),
    (1.0, 0.8413447460685429),
    (1.25, 0.8943502263331448),
    (1.5, 0.9331927987311419),
    (1.75, 0.9599408431361829),
    (2.0, 0.9772498680518208),
    (2.25, 0.9877755273449553),
    (2.5, 0.9937903346742238),
    (2.75, 0.9970202367649454),
    (3.0, 0.9986501019683699),
    (3.25, 0.9994229749576092),
    (3.5, 0.9997673709209645),
    (3.75, 0.9999115827147992),
    (4.0, 0.9999683287581669),
    (4.25, 0.9999893114742251),
    (4.5, 0.9999966023268753),
    (4.75, 0.9999989829167575),
    (5.0, 0.9999997133484281),
    (5.25, 0.9999999239503948),
    (5.5, 0.9999999810104375),
    (5.75, 0.9999999955378276),
    (6.0, 0.9999999990134123),
    (6.25, 0.9999999997947736),
    (6.5, 0.99999999995984),
    (6.75, 0.9999999999926077),
    (7.0, 0.9999999999987201),
    (7.25, 0.9999999999997916),
    (7.5, 0.9999999999999681),
    (7.75, 0.9999999999999954),
    (8.0, 0.9999999999999993),
    (-9.0, 1.1285884059538405e-19),
    (-10.0, 7.619853024160525e-24),
    (-12.0, 1.776482112077679e-33),
    (-15.0, 3.670966199312751e-51),
    (-20.0, 2.7536241186062337e-89),
    (-25.0, 3.056696706382561e-138),
    (-30.0, 4.906713927148187e-198),
    (-37.0, 5.725571222524577e-300),
];

#[test]
fn normal_cdf_matches_high_precision_table() {
    for &(x, expected) in PHI_TABLE.iter() {
        let ours = std_normal_cdf(x).unwrap();
        assert!((ours - expected).abs() <= 1e-12, "x={x}: {ours} vs {expected}");
        assert_relative_eq!(ours, expected, max_relative = 1e-12);
    }
}

#[test]
fn normal_cdf_matches_statrs() {
    let reference = Normal::new(0.0, 1.0).unwrap();
    for k in -800..=800 {
        let x = k as f64 / 100.0;
        let ours = std_normal_cdf(x).unwrap();
        let theirs = reference.cdf(x);
        assert!((ours - theirs).abs() <= 1e-9, "x={x}: {ours} vs {theirs}");
    }
    for k in 8..=37 {
        let x = -(k as f64);
        assert_relative_eq!(std_normal_cdf(x).unwrap(), reference.cdf(x), max_relative = 1e-9);
    }
}

#[test]
fn normal_reference_points() {
    assert_eq!(std_normal_cdf(0.0).unwrap(), 0.5);
    assert!((std_normal_cdf(1.959964).unwrap() - 0.975).abs() < 1e-7);
    assert!((std_normal_cdf(-1.3).unwrap() - (1.0 - std_normal_cdf(1.3).unwrap())).abs() < 1e-15);
    assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
    assert!((std_normal_quantile(0.975).unwrap() - 1.959964).abs() < 1e-6);
    assert!((std_normal_quantile(0.025).unwrap() + 1.959964).abs() < 1e-6);
}

#[test]
fn normal_quantile_matches_reference() {
    let reference = Normal::new(0.0, 1.0).unwrap();
    for q in [
        1e-300,
        1e-100,
        1e-20,
        1e-10,
        1e-7,
        1e-3,
        0.025,
        0.2,
        0.5,
        0.7,
        0.975,
        0.999,
        1.0 - 1e-7,
        1.0 - 1e-12,
    ] {
        let ours = std_normal_quantile(q).unwrap();
        let theirs = reference.inverse_cdf(q);
        assert!(
            (ours - theirs).abs() <= 1e-8 * theirs.abs().max(1.0),
            "q={q}: {ours} vs {theirs}"
        );
    }
}

#[test]
fn student_t_cdf_matches_reference() {
    for df in [1.0, 2.0, 3.5, 10.0, 30.0, 190.0, 1000.0] {
        let reference = StudentsT::new(0.0, 1.0, df).unwrap();
        for k in -60..=60 {
            let t = k as f64 / 5.0;
            let ours = student_t_cdf(t, df).unwrap();
            let theirs = reference.cdf(t);
            assert!((ours - theirs).abs() <= 1e-10, "df={df} t={t}: {ours} vs {theirs}");
        }
    }
}

#[test]
fn student_t_quantile_matches_reference() {
    for df in [1u64, 2, 5, 30, 190, 399, 799, 5000] {
        let reference = StudentsT::new(0.0, 1.0, df as f64).unwrap();
        for q in [0.001, 0.025, 0.3, 0.5, 0.8, 0.975, 0.985, 0.9999] {
            let ours = student_t_quantile(q, df).unwrap();
            let theirs = reference.inverse_cdf(q);
            assert!(
                (ours - theirs).abs() <= 1e-6 * theirs.abs().max(1.0),
                "df={df} q={q}: {ours} vs {theirs}"
            );
            assert!((student_t_cdf(ours, df as f64).unwrap() - q).abs() <= 1e-12);
        }
    }
}

#[test]
fn student_t_closed_forms() {
    assert_eq!(student_t_quantile(0.5, 7).unwrap(), 0.0);
    assert!((student_t_quantile(0.975, 1).unwrap() - 12.7062).abs() < 1e-4);
    let cauchy = (std::f64::consts::PI * (0.975 - 0.5)).tan();
    assert_relative_eq!(student_t_quantile(0.975, 1).unwrap(), cauchy, max_relative = 1e-10);
    let large = student_t_quantile(0.975, 1_000_000).unwrap();
    assert!((large - std_normal_quantile(0.975).unwrap()).abs() < 1e-4);
}

#[test]
fn tuning_quantile_at_table_one_size() {
    let (n, p) = (191.0f64, 100.0f64);
    let s_hat = n.sqrt() / p.ln();
    assert!((s_hat - 3.001).abs() < 1e-3);
    let q = 1.0 - s_hat / (2.0 * p);
    let reference = StudentsT::new(0.0, 1.0, n - 1.0).unwrap().inverse_cdf(q);
    let ours = student_t_quantile(q, 190).unwrap();
    assert!((ours - reference).abs() < 1e-8, "{ours} vs {reference}");
}

#[test]
fn log_gamma_and_incomplete_beta_match_reference() {
    for k in 1..400 {
        let x = k as f64 / 7.0;
        assert_relative_eq!(ln_gamma(x), gamma::ln_gamma(x), max_relative = 1e-12, epsilon = 1e-13);
    }
    for (a, b) in [(0.5, 0.5), (0.5, 95.0), (2.0, 3.0), (50.0, 0.5), (399.5, 0.5)] {
        for k in 0..=20 {
            let x = k as f64 / 20.0;
            let ours = reg_inc_beta(a, b, x);
            let theirs = beta_reg(a, b, x);
            assert!((ours - theirs).abs() < 1e-12, "a={a} b={b} x={x}: {ours} vs {theirs}");
        }
    }
}

#[test]
fn domain_errors() {
    assert!(std_normal_quantile(0.0).is_err());
    assert!(std_normal_quantile(1.0).is_err());
    assert!(std_normal_cdf(f64::NAN).is_err());
    assert!(student_t_quantile(0.5, 0).is_err());
    assert!(student_t_quantile(1.5, 3).is_err());
}

#[test]
fn dense_kernel_examples() {
    let l = cholesky(&SymMatrix::new(array![[4.0, 2.0], [2.0, 5.0]]).unwrap()).unwrap();
    assert_eq!(l.lower(), &array![[2.0, 0.0], [1.0, 2.0]]);
    assert!(cholesky(&SymMatrix::new(array![[1.0, 2.0], [2.0, 1.0]]).unwrap()).is_err());
    assert_eq!(
        cholesky(&SymMatrix::identity(3)).unwrap().lower(),
        &ndarray::Array2::<f64>::eye(3)
    );

    let e = sym_eigen(&SymMatrix::new(array![[2.0, 1.0], [1.0, 2.0]]).unwrap()).unwrap();
    assert!((e.values[0] - 1.0).abs() < 1e-12 && (e.values[1] - 3.0).abs() < 1e-12);
    let e = sym_eigen(&SymMatrix::from_diag(&[5.0, -1.0])).unwrap();
    assert_eq!(e.values.to_vec(), vec![-1.0, 5.0]);

    let r = sym_sqrt(&SymMatrix::from_diag(&[4.0, 9.0])).unwrap();
    assert!(common::max_abs_diff(r.as_array(), &array![[2.0, 0.0], [0.0, 3.0]]) < 1e-12);

    let sigma = spd_inverse(&five_diag(3, 1.0, 0.3, 0.0)).unwrap();
    let root = sym_sqrt(&sigma).unwrap();
    let back = root.as_array().dot(root.as_array());
    assert!(common::max_abs_diff(&back, sigma.as_array()) < 1e-9);

    let x = DesignMatrix::new(array![[1.0, 2.0]]).unwrap();
    assert_eq!(sample_covariance(&x).as_array(), &array![[1.0, 2.0], [2.0, 4.0]]);
    let x = DesignMatrix::new(ndarray::Array2::eye(2)).unwrap();
    assert_eq!(sample_covariance(&x).as_array(), &array![[0.5, 0.0], [0.0, 0.5]]);
}

#[test]
fn inverse_matches_gauss_jordan() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for p in 2..12 {
        let a = common::random_spd(p, 0.1, &mut rng);
        let ours = spd_inverse(&a).unwrap();
        let oracle = common::gauss_jordan_inverse(a.as_array());
        assert!(common::max_abs_diff(ours.as_array(), &oracle) < 1e-9);
    }
}

#[test]
fn sample_covariance_is_psd() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for (n, p) in [(3, 8), (20, 5), (2, 2)] {
        let x = DesignMatrix::new(common::normal_matrix(n, p, &mut rng)).unwrap();
        let s = sample_covariance(&x);
        assert!(common::max_abs_diff(s.as_array(), &common::naive_covariance(x.as_array())) < 1e-12);
        let e = sym_eigen(&s).unwrap();
        assert!(e.values.iter().all(|&v| v >= -1e-10));
    }
}
