mod common;

use ndarray::{Array1, Array2, Axis};
use precis::lasso::{
    kkt_residual, kkt_tolerance, soft_threshold, solve_lasso, solve_lasso_gram, solve_sqrt_lasso, GramProblem,
    LassoProblem, SolverOptions,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn objective(x: &Array2<f64>, y: &Array1<f64>, b: &Array1<f64>, lambda: f64) -> f64 {
    let r = y - &x.dot(b);
    r.dot(&r) / x.nrows() as f64 + 2.0 * lambda * b.iter().map(|v| v.abs()).sum::<f64>()
}

fn random_problem(n: usize, q: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = common::normal_matrix(n, q, &mut rng);
    let mut beta = Array1::zeros(q);
    for k in 0..q.min(3) {
        beta[k] = 1.0 - 0.4 * k as f64;
    }
    let y = x.dot(&beta) + common::normal_vector(n, &mut rng) * 0.5;
    (x, y)
}

fn lambda_max(x: &Array2<f64>, y: &Array1<f64>) -> f64 {
    let n = x.nrows() as f64;
    x.t().dot(y).iter().fold(0.0f64, |m, v| m.max((v / n).abs()))
}

#[test]
fn zero_penalty_is_least_squares() {
    let (x, y) = random_problem(40, 6, 1);
    let sol = solve_lasso(
        &LassoProblem::new(x.view(), y.view(), 0.0).unwrap(),
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(sol.converged);
    let xtx = common::naive_matmul(&x.t().to_owned(), &x);
    let xty = x.t().dot(&y).insert_axis(Axis(1));
    let ols = common::naive_matmul(&common::gauss_jordan_inverse(&xtx), &xty).remove_axis(Axis(1));
    for (a, b) in sol.coefficients.iter().zip(ols.iter()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn orthonormal_design_closed_form() {
    let n = 8;
    let mut x = Array2::zeros((n, 4));
    for k in 0..4 {
        x[(2 * k, k)] = 2.0;
        x[(2 * k + 1, k)] = -2.0;
    }
    let xtx = x.t().dot(&x) / n as f64;
    assert!(common::max_abs_diff(&xtx, &Array2::eye(4)) < 1e-14);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y = common::normal_vector(n, &mut rng);
    for lambda in [0.0, 0.1, 0.3, 1.0] {
        let sol = solve_lasso(
            &LassoProblem::new(x.view(), y.view(), lambda).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        for k in 0..4 {
            let z = x.column(k).dot(&y) / n as f64;
            assert!((sol.coefficients[k] - soft_threshold(z, lambda)).abs() < 1e-8);
        }
    }
}

#[test]
fn scalar_hand_example() {
    let x = Array2::ones((4, 1));
    let y = Array1::from_elem(4, 2.0);
    let sol = solve_lasso(
        &LassoProblem::new(x.view(), y.view(), 0.5).unwrap(),
        &SolverOptions::default(),
    )
    .unwrap();
    assert!((sol.coefficients[0] - 1.5).abs() < 1e-12);
}

#[test]
fn soft_threshold_examples() {
    assert_eq!(soft_threshold(3.0, 1.0), 2.0);
    assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
    assert_eq!(soft_threshold(-2.5, 0.0), -2.5);
}

#[test]
fn penalty_homogeneity() {
    for seed in 0..10 {
        let (x, y) = random_problem(50, 12, 100 + seed);
        let lambda = 0.3 * lambda_max(&x, &y);
        let opts = SolverOptions {
            tol: 1e-12,
            ..SolverOptions::default()
        };
        let base = solve_lasso(&LassoProblem::new(x.view(), y.view(), lambda).unwrap(), &opts).unwrap();
        let c = 3.7;
        let y2 = &y * c;
        let scaled = solve_lasso(&LassoProblem::new(x.view(), y2.view(), lambda * c).unwrap(), &opts).unwrap();
        for (a, b) in base.coefficients.iter().zip(scaled.coefficients.iter()) {
            assert!((a * c - b).abs() < 1e-8);
        }
    }
}

#[test]
fn null_solution_threshold_both_directions() {
    for seed in 0..20 {
        let (x, y) = random_problem(30, 10, 200 + seed);
        let lmax = lambda_max(&x, &y);
        let above = solve_lasso(
            &LassoProblem::new(x.view(), y.view(), lmax).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(above.coefficients.iter().all(|&b| b == 0.0));
        let zero = Array1::zeros(10);
        let p = LassoProblem::new(x.view(), y.view(), lmax * 1.01).unwrap();
        assert_eq!(kkt_residual(&p, zero.view()).unwrap(), 0.0);
        let below = solve_lasso(
            &LassoProblem::new(x.view(), y.view(), lmax * 0.99).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(below.coefficients.iter().any(|&b| b != 0.0));
    }
}

#[test]
fn converged_solutions_satisfy_kkt() {
    for seed in 0..10 {
        let (x, y) = random_problem(60, 25, 300 + seed);
        let lambda = 0.2 * lambda_max(&x, &y);
        let problem = LassoProblem::new(x.view(), y.view(), lambda).unwrap();
        let sol = solve_lasso(&problem, &SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(kkt_residual(&problem, sol.coefficients.view()).unwrap() <= kkt_tolerance(lambda));
    }
}

#[test]
fn perturbing_an_active_coefficient_breaks_kkt_and_raises_objective() {
    let (x, y) = random_problem(60, 15, 9);
    let lambda = 0.2 * lambda_max(&x, &y);
    let problem = LassoProblem::new(x.view(), y.view(), lambda).unwrap();
    let sol = solve_lasso(&problem, &SolverOptions::default()).unwrap();
    let k = sol
        .coefficients
        .iter()
        .position(|&b| b != 0.0)
        .expect("an active coefficient");
    let mut moved = sol.coefficients.clone();
    moved[k] += 0.1;
    let before = kkt_residual(&problem, sol.coefficients.view()).unwrap();
    let after = kkt_residual(&problem, moved.view()).unwrap();
    assert!(after > before);
    assert!(after > kkt_tolerance(lambda));
    assert!(objective(&x, &y, &moved, lambda) > objective(&x, &y, &sol.coefficients, lambda));
}

#[test]
fn gram_and_residual_routes_agree() {
    for seed in 0..10 {
        let (x, y) = random_problem(80, 30, 400 + seed);
        let n = x.nrows() as f64;
        let lambda = 0.15 * lambda_max(&x, &y);
        let direct = solve_lasso(
            &LassoProblem::new(x.view(), y.view(), lambda).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        let gram = x.t().dot(&x) / n;
        let xty = x.t().dot(&y) / n;
        let gp = GramProblem {
            gram: gram.view(),
            xty: xty.view(),
            yty: y.dot(&y) / n,
            penalty: lambda,
        };
        let via_gram = solve_lasso_gram(&gp, &SolverOptions::default()).unwrap();
        for (a, b) in direct.coefficients.iter().zip(via_gram.coefficients.iter()) {
            assert!((a - b).abs() < 1e-6, "seed {seed}: {a} vs {b}");
        }
        assert!((direct.residual_sq - via_gram.residual_sq).abs() < 1e-8);
    }
}

#[test]
fn sqrt_lasso_special_cases() {
    let (x, y) = random_problem(40, 5, 17);
    let sqrt0 = solve_sqrt_lasso(
        &LassoProblem::new(x.view(), y.view(), 0.0).unwrap(),
        &SolverOptions::default(),
    )
    .unwrap();
    let ols = solve_lasso(
        &LassoProblem::new(x.view(), y.view(), 0.0).unwrap(),
        &SolverOptions::default(),
    )
    .unwrap();
    for (a, b) in sqrt0.coefficients.iter().zip(ols.coefficients.iter()) {
        assert!((a - b).abs() < 1e-8);
    }

    let beta = Array1::from(vec![1.0, -2.0, 0.0, 0.5, 0.0]);
    let noiseless = x.dot(&beta);
    let fit = solve_sqrt_lasso(
        &LassoProblem::new(x.view(), noiseless.view(), 0.0).unwrap(),
        &SolverOptions::default(),
    )
    .unwrap();
    for (a, b) in fit.coefficients.iter().zip(beta.iter()) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn sqrt_lasso_is_a_fixed_point_of_the_lasso_step() {
    for seed in 0..5 {
        let (x, y) = random_problem(100, 20, 500 + seed);
        let n = x.nrows() as f64;
        let lambda0 = (2.0 * 20f64.ln() / n).sqrt();
        let sol = solve_sqrt_lasso(
            &LassoProblem::new(x.view(), y.view(), lambda0).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(sol.converged);
        let r = &y - &x.dot(&sol.coefficients);
        let sigma = (r.dot(&r) / n).sqrt();
        let again = solve_lasso(
            &LassoProblem::new(x.view(), y.view(), lambda0 * sigma).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        for (a, b) in sol.coefficients.iter().zip(again.coefficients.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}
