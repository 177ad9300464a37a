mod common;

use precis::experiments::{
    collect_standardized_stats, run_coverage, run_coverage_with, run_error_norms, run_selection, ExperimentConfig,
    LambdaRule,
};
use precis::simgen::ModelSpec;
use precis::Error;

fn s1_config(p: usize, n: usize, reps: usize, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ModelSpec::new(p, [1.0, 0.3, 0.0]), n, reps);
    c.master_seed = seed;
    c
}

#[test]
fn larger_alpha_gives_shorter_intervals_and_less_coverage() {
    let mut config = s1_config(20, 80, 30, 3);
    config.per_entry = true;
    let wide = run_coverage(&config).unwrap();
    config.alpha = 0.2;
    let narrow = run_coverage(&config).unwrap();
    let (lw, ln) = (wide.length.unwrap(), narrow.length.unwrap());
    let (cw, cn) = (wide.coverage.unwrap(), narrow.coverage.unwrap());
    for (a, b) in lw.iter().zip(ln.iter()) {
        assert!(b < a);
    }
    for (a, b) in cw.iter().zip(cn.iter()) {
        assert!(b <= a);
    }
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let mut config = s1_config(30, 100, 70, 5);
    config.per_entry = true;
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_coverage(&config).unwrap())
    };
    let a = run(1);
    let b = run(8);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let bits = |m: &ndarray::Array2<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(a.coverage.as_ref().unwrap()), bits(b.coverage.as_ref().unwrap()));
    assert_eq!(bits(a.length.as_ref().unwrap()), bits(b.length.as_ref().unwrap()));
}

#[test]
fn infinite_intervals_cover_everything() {
    let config = s1_config(10, 60, 1, 0);
    let report = run_coverage_with(&config, |v| v.sigma.fill(1e300)).unwrap();
    assert_eq!(report.avgcov_s0, 1.0);
    assert_eq!(report.avgcov_s0c, 1.0);
}

#[test]
fn coverage_is_honest_as_n_grows() {
    let mut small = Vec::new();
    let mut large = Vec::new();
    for seed in 0..5 {
        small.push(run_coverage(&s1_config(100, 191, 100, seed)).unwrap().avgcov_s0);
        large.push(run_coverage(&s1_config(100, 800, 100, seed)).unwrap().avgcov_s0);
    }
    let (ms, ml) = (common::median(&mut small), common::median(&mut large));
    assert!(ml >= ms - 0.01, "n=800: {ml}, n=191: {ms}");
}

#[test]
fn sup_norm_error_and_remainder_shrink_with_n() {
    let at = |n: usize| run_error_norms(&s1_config(100, n, 50, 13)).unwrap();
    let (a, b) = (at(400), at(800));
    let t_ratio = common::median(&mut a.iter().map(|e| e.t_sup).collect::<Vec<_>>())
        / common::median(&mut b.iter().map(|e| e.t_sup).collect::<Vec<_>>());
    assert!(t_ratio >= 1.3, "ratio {t_ratio}");

    let c = at(200);
    let rem_200 = common::median(&mut c.iter().map(|e| e.remainder_sup).collect::<Vec<_>>());
    let rem_800 = common::median(&mut b.iter().map(|e| e.remainder_sup).collect::<Vec<_>>());
    assert!(rem_800 < rem_200, "{rem_800} vs {rem_200}");
}

#[test]
fn selection_report_is_consistent() {
    let mut config = ExperimentConfig::new(ModelSpec::new(30, [1.0, 0.5, 0.4]), 200, 10);
    config.selection_nu = Some(1.0);
    let report = run_selection(&config).unwrap();
    assert_eq!(report.s0_size, 30 + 2 * 29 + 2 * 28);
    assert_eq!(report.tp_per_replication.len(), 10);
    let tp = report.tp_per_replication.iter().sum::<usize>() as f64 / 10.0;
    assert!((report.tp - tp).abs() < 1e-12);
    assert!(report.tp <= report.s0_size as f64);
    assert!((report.fp_rate - 100.0 * report.fp / (900 - report.s0_size) as f64).abs() < 1e-12);

    config.selection_nu = None;
    assert!(run_selection(&config).is_err());
}

#[test]
fn standardized_stats_have_one_value_per_replication() {
    let config = s1_config(15, 80, 12, 2);
    let stats = collect_standardized_stats(&config, &[(0, 0), (0, 1), (0, 2)]).unwrap();
    assert_eq!(stats.len(), 3);
    assert!(stats.iter().all(|s| s.len() == 12 && s.iter().all(|v| v.is_finite())));
    assert!(collect_standardized_stats(&config, &[(0, 15)]).is_err());
}

#[test]
fn failed_replication_aborts_with_its_index_and_seed() {
    let mut config = s1_config(20, 10, 3, 44);
    config.lambda_rule = LambdaRule::Fixed(0.0);
    match run_coverage(&config) {
        Err(e @ Error::Replication { seed: 44, .. }) => assert!(e.is_numeric()),
        other => panic!("expected a replication error, got {other:?}"),
    }
}

#[test]
fn experiment_configs_round_trip() {
    let mut config = s1_config(100, 400, 100, 9);
    config.selection_nu = Some(1.0);
    config.lambda_rule = LambdaRule::Fixed(0.12);
    let text = config.to_config();
    assert_eq!(ExperimentConfig::from_config(&text).unwrap(), config);
    assert!(ExperimentConfig::from_config("p=10\nrho=1,0.3,0\nn=50\nreplications=0\n").is_err());
}
