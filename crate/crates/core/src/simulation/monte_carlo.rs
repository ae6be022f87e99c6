//! Parallel replication over freshly drawn panels.
//!
//! Replication `i` draws everything from `ChaCha8(master_seed)` on stream `i`,
//! so results do not depend on how many worker threads run them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_with_rng, ScenarioSpec, ScenarioTruth};
use crate::clustering::{
    cluster_pipeline, detect_no_cluster, omega_threshold, OmegaChoice, PipelineConfig,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate_replications, detection_errors, misclassification_count, projection_distance,
    OmegaErrors, SummaryTable, TruthComparison,
};
use crate::factor_count::{
    cumulative_ratio_sequence, default_j0, single_matrix_ratio_baseline, FactorCountReport,
};
use crate::linalg::projection_onto;
use crate::loadings::{oracle_weak_projection, projection, MAX_CONDITION};
use crate::panel::TimeSeriesPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    /// Loadings use the true `(r0, r)`.
    Known,
    /// Loadings use the counts selected by the cumulative ratios.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stages {
    /// Only the factor-count comparison.
    FactorCount,
    /// Factor counts, loadings, no-cluster detection and K-means.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub reps: usize,
    pub master_seed: u64,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
    pub counts: CountMode,
    pub stages: Stages,
    /// Common factors rescaled to weak strength.
    pub demoted: usize,
    /// `counts` and `kmeans.seed` are set per replication.
    pub pipeline: PipelineConfig,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            reps: 100,
            master_seed: 0,
            jobs: 0,
            counts: CountMode::Known,
            stages: Stages::Full,
            demoted: 0,
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub spec: ScenarioSpec,
    pub config: MonteCarloConfig,
    pub table: SummaryTable,
    /// Successful replications in index order.
    pub replications: Vec<(usize, TruthComparison)>,
    pub failures: Vec<ReplicationFailure>,
}

/// Selects counts and reports whether `r̂0 + r̂` is right.
fn sum_matches(report: &mut FactorCountReport, total: usize) -> bool {
    match report.select() {
        Ok(c) => c.r0 + c.r == total,
        Err(_) => false,
    }
}

fn r0_match(report: &FactorCountReport, r0: usize) -> bool {
    report.selected.map(|c| c.r0 == r0).unwrap_or(false)
}

fn compare(
    panel: &TimeSeriesPanel,
    truth: &ScenarioTruth,
    d_true: usize,
    config: &MonteCarloConfig,
    kmeans_seed: u64,
) -> Result<TruthComparison> {
    let p = panel.p();
    let pc = &config.pipeline;
    let j0 = pc.j0.unwrap_or_else(|| default_j0(p));
    let (r0_true, r_true) = truth.effective_counts;

    let mut cumulative = cumulative_ratio_sequence(panel, pc.k0, j0)?;
    let mut baseline = single_matrix_ratio_baseline(panel, pc.k0, j0)?;
    let sum_correct = sum_matches(&mut cumulative, r0_true + r_true);
    let baseline_sum_correct = sum_matches(&mut baseline, r0_true + r_true);
    let mut out = TruthComparison {
        r0_correct: Some(r0_match(&cumulative, r0_true)),
        sum_correct: Some(sum_correct),
        baseline_r0_correct: Some(r0_match(&baseline, r0_true)),
        baseline_sum_correct: Some(baseline_sum_correct),
        ..Default::default()
    };
    if config.stages == Stages::FactorCount {
        return Ok(out);
    }

    let counts = match config.counts {
        CountMode::Known => (r0_true, r_true),
        CountMode::Estimated => {
            let c = cumulative.select()?;
            (c.r0, c.r)
        }
    };
    let mut run_cfg = pc.clone();
    run_cfg.counts = Some(counts);
    run_cfg.kmeans.seed = kmeans_seed;
    let result = cluster_pipeline(panel, &run_cfg)?;

    // effective strong loadings are the leading columns of A; demoted ones join B
    let r0_eff = r0_true;
    let a_eff = truth.a_true.columns(0, r0_eff).into_owned();
    let demoted = truth.a_true.ncols() - r0_eff;
    let b_eff = if demoted == 0 {
        truth.b_padded.clone()
    } else {
        let mut m = nalgebra::DMatrix::zeros(p, truth.b_padded.ncols() + demoted);
        m.columns_mut(0, truth.b_padded.ncols()).copy_from(&truth.b_padded);
        m.columns_mut(truth.b_padded.ncols(), demoted)
            .copy_from(&truth.a_true.columns(r0_eff, demoted));
        m
    };
    let strong_target = if r0_eff == 0 {
        nalgebra::DMatrix::zeros(p, p)
    } else {
        projection_onto(&a_eff, MAX_CONDITION)?
    };
    out.subspace_error_strong = Some(projection_distance(&projection(&result.strong), &strong_target)?);
    let weak_target = if r0_eff == 0 {
        projection_onto(&b_eff, MAX_CONDITION)?
    } else {
        oracle_weak_projection(&a_eff, &b_eff)?
    };
    out.subspace_error_weak = Some(projection_distance(&projection(&result.weak), &weak_target)?);

    let det = detection_errors(&result.no_cluster_indices, &truth.j_true, p)?;
    out.e1 = Some(det.e1);
    out.e2 = Some(det.e2);
    let r_used = result.weak.r();
    let mut sweep = [OmegaErrors { omega: 0.0, e1: 0.0, e2: 0.0 }; 3];
    for (slot, choice) in sweep.iter_mut().zip([OmegaChoice::P1, OmegaChoice::P2, OmegaChoice::P3]) {
        let omega = omega_threshold(choice, r_used, p)?;
        let d = detection_errors(&detect_no_cluster(&result.weak, omega), &truth.j_true, p)?;
        *slot = OmegaErrors { omega, e1: d.e1, e2: d.e2 };
    }
    out.omega_sweep = Some(sweep);

    let mut predicted = Vec::new();
    let mut actual = Vec::new();
    for (&i, &c) in result.retained_indices.iter().zip(&result.assignments) {
        if let Some(t) = truth.membership[i] {
            predicted.push(c);
            actual.push(t);
        }
    }
    let tau = misclassification_count(&predicted, &actual)?;
    out.tau = Some(tau);
    out.tau_rate = Some(if actual.is_empty() { 0.0 } else { tau as f64 / actual.len() as f64 });
    out.d_hat_correct = Some(result.d_used == d_true);
    Ok(out)
}

/// One replication, reproducible from `(master_seed, index)` alone.
pub fn run_replication(
    spec: &ScenarioSpec,
    config: &MonteCarloConfig,
    index: usize,
) -> Result<TruthComparison> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed);
    rng.set_stream(index as u64);
    let (panel, truth) = generate_with_rng(spec, config.demoted, &mut rng)?;
    let kmeans_seed: u64 = rng.gen();
    compare(&panel, &truth, spec.d, config, kmeans_seed)
}

pub fn run_monte_carlo(spec: &ScenarioSpec, config: &MonteCarloConfig) -> Result<MonteCarloSummary> {
    if config.reps == 0 {
        return Err(Error::InvalidParameter("reps must be at least 1".into()));
    }
    spec.validate()?;
    let work = || -> Vec<Result<TruthComparison>> {
        (0..config.reps)
            .into_par_iter()
            .map(|i| run_replication(spec, config, i))
            .collect()
    };
    let outcomes = if config.jobs == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(work)
    };
    let mut replications = Vec::new();
    let mut failures = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(c) => replications.push((i, c)),
            Err(e) => {
                log::warn!("replication {i} failed: {e}");
                failures.push(ReplicationFailure {
                    replication: i,
                    code: e.code().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    let comparisons: Vec<TruthComparison> = replications.iter().map(|(_, c)| c.clone()).collect();
    Ok(MonteCarloSummary {
        spec: spec.clone(),
        config: config.clone(),
        table: aggregate_replications(&comparisons),
        replications,
        failures,
    })
}
