//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line.

mod common;

use std::io::Write;
use std::sync::OnceLock;

use factorclust::evaluation::SummaryTable;
use factorclust::linalg::{sym_eigen_desc, sym_eigenvalues_desc, symmetrize};
use factorclust::simulation::{
    example1_population_eigenvalues, generate_example1, run_monte_carlo, CountMode,
    Example1Params, MonteCarloConfig, MonteCarloSummary, ScenarioSpec, Stages,
};

const MASTER_SEED: u64 = 20_240_501;

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("acceptance criterion {criterion}: {verdict} {detail}\n");
    // bypass the test harness capture so the line always reaches the log
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn mean(table: &SummaryTable, metric: &str) -> f64 {
    table
        .mean(metric)
        .unwrap_or_else(|| panic!("metric {metric} missing from summary"))
}

/// Scenario I, p1 = 25, known counts, 200 replications; shared by several criteria.
fn scenario_one_known() -> &'static MonteCarloSummary {
    static RUN: OnceLock<MonteCarloSummary> = OnceLock::new();
    RUN.get_or_init(|| {
        let spec = ScenarioSpec::scenario_one(25);
        let config = MonteCarloConfig {
            reps: 200,
            master_seed: MASTER_SEED,
            counts: CountMode::Known,
            stages: Stages::Full,
            ..Default::default()
        };
        run_monte_carlo(&spec, &config).expect("scenario I run")
    })
}

#[test]
fn criterion_1_factor_count_frequencies() {
    let run = scenario_one_known();
    let r0 = mean(&run.table, "r0_correct");
    let sum = mean(&run.table, "r0_plus_r_correct");
    let pass = run.failures.is_empty() && within(r0, 0.751, 0.07) && within(sum, 0.998, 0.02);
    report(
        1,
        pass,
        &format!("freq(r0 hat = r0) = {r0:.3}, freq(r0 hat + r hat = r0 + r) = {sum:.3}, failures = {}", run.failures.len()),
    );
    assert!(pass);
}

#[test]
fn criterion_2_cumulative_beats_single_matrix() {
    let spec = ScenarioSpec::scenario_two(25);
    let config = MonteCarloConfig {
        reps: 100,
        master_seed: MASTER_SEED,
        stages: Stages::FactorCount,
        ..Default::default()
    };
    let run = run_monte_carlo(&spec, &config).expect("scenario II run");
    let cumulative = mean(&run.table, "r0_plus_r_correct");
    let single = mean(&run.table, "baseline_r0_plus_r_correct");
    let pass = run.failures.is_empty() && cumulative >= 0.95 && single < 0.75 && cumulative > single;
    report(
        2,
        pass,
        &format!("cumulative = {cumulative:.3}, single matrix = {single:.3}"),
    );
    assert!(pass);
}

#[test]
fn criterion_3_subspace_errors() {
    let run = scenario_one_known();
    let a = mean(&run.table, "strong_subspace_frobenius");
    let b = mean(&run.table, "weak_subspace_frobenius");
    let pass = within(a, 0.230, 0.03) && within(b, 0.528, 0.03);
    report(3, pass, &format!("strong error = {a:.4}, weak error = {b:.4}"));
    assert!(pass);
}

#[test]
fn criterion_4_detection_errors() {
    let run = scenario_one_known();
    let e1 = mean(&run.table, "e1");
    let e2 = mean(&run.table, "e2");
    let e1_p1 = mean(&run.table, "e1_omega_p1");
    let e1_p2 = mean(&run.table, "e1_omega_p2");
    let e1_p3 = mean(&run.table, "e1_omega_p3");
    let pass = within(e1, 0.073, 0.02) && e2 <= 0.01 && e1_p1 < e1_p2 && e1_p2 < e1_p3;
    report(
        4,
        pass,
        &format!("E1 = {e1:.4}, E2 = {e2:.4}, E1 by rule = ({e1_p1:.4}, {e1_p2:.4}, {e1_p3:.4})"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_clustering_accuracy() {
    let run = scenario_one_known();
    let tau_rate = mean(&run.table, "tau_rate");
    let d_freq = mean(&run.table, "d_hat_correct");
    let pass = tau_rate <= 0.005 && d_freq >= 0.99;
    report(5, pass, &format!("tau rate = {tau_rate:.5}, freq(d hat = d) = {d_freq:.3}"));
    assert!(pass);
}

#[test]
fn criterion_6_example1_eigen_structure() {
    let sizes = [100usize, 400, 1600];
    let mut logs_p = Vec::new();
    let mut logs_ratio = Vec::new();
    let mut worst_rel = 0.0f64;
    let mut spaces_agree = true;
    for &p in &sizes {
        let params = Example1Params { p, n: 3, ..Default::default() };
        let ex = generate_example1(&params).unwrap();
        let s0 = symmetrize(&(&ex.sigma0 * ex.sigma0.transpose()));
        let s1 = symmetrize(&(&ex.sigma1 * ex.sigma1.transpose()));
        let vals = sym_eigenvalues_desc(&symmetrize(&(&s0 + &s1))).unwrap();
        let reduced = example1_population_eigenvalues(&params).unwrap();
        let a3 = params.a3;
        let closed = (p as f64).powf(2.0 - 2.0 * params.delta) * ((1.0 + a3 * a3).powi(2) + a3 * a3);
        worst_rel = worst_rel.max((vals[2] - closed).abs() / closed);
        worst_rel = worst_rel.max((reduced[2] - closed).abs() / closed);
        logs_p.push((p as f64).ln());
        logs_ratio.push((vals[1] / vals[2]).ln());
        if p == 100 {
            // one lag alone already spans the same three-dimensional space
            let u0 = sym_eigen_desc(&s0).unwrap().vectors.columns(0, 3).into_owned();
            let u1 = sym_eigen_desc(&s1).unwrap().vectors.columns(0, 3).into_owned();
            let d = (&u0 * u0.transpose() - &u1 * u1.transpose()).abs().max();
            spaces_agree = d < 1e-8;
        }
    }
    let slope = common::ols_slope(&logs_p, &logs_ratio);
    let delta = Example1Params::default().delta;
    let pass = within(slope, delta, 0.1) && worst_rel <= 1e-6 && spaces_agree;
    report(
        6,
        pass,
        &format!("slope = {slope:.4} (delta {delta}), lambda3 rel err = {worst_rel:.2e}, single-lag spaces agree = {spaces_agree}"),
    );
    assert!(pass);
}

#[test]
fn criterion_7_oracle_equivalence() {
    let mut failures = Vec::new();
    for seed in 0..100u64 {
        if let Err(msg) = common::oracle_checks(seed) {
            failures.push(format!("seed {seed}: {msg}"));
        }
    }
    let pass = failures.is_empty();
    let first = failures.first().map(|f| format!(", first: {f:?}")).unwrap_or_default();
    report(7, pass, &format!("100 seeds, {} mismatches{first}", failures.len()));
    assert!(pass, "{failures:?}");
}

#[test]
fn criterion_8_invariants() {
    let mut failures = Vec::new();
    for seed in 0..50u64 {
        if let Err(msg) = common::invariant_checks(seed) {
            failures.push(format!("seed {seed}: {msg}"));
        }
    }
    let pass = failures.is_empty();
    let first = failures.first().map(|f| format!(", first: {f:?}")).unwrap_or_default();
    report(8, pass, &format!("50 seeds, {} violations{first}", failures.len()));
    assert!(pass, "{failures:?}");
}
