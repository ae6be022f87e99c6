//! Ground-truth error metrics and replication summaries.

use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_operator_norm;

/// Exhaustive label matching is used up to this many labels.
pub const EXHAUSTIVE_MATCHING_MAX: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDistance {
    pub operator: f64,
    pub frobenius: f64,
}

pub fn projection_distance(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<ProjectionDistance> {
    if p.shape() != q.shape() || !p.is_square() {
        return Err(Error::DimensionMismatch {
            expected: p.nrows(),
            actual: q.nrows(),
        });
    }
    let diff = p - q;
    let diff = (&diff + diff.transpose()) * 0.5;
    Ok(ProjectionDistance {
        operator: sym_operator_norm(&diff)?,
        frobenius: diff.norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionErrors {
    /// Share of truly clustered series flagged as no-cluster.
    pub e1: f64,
    /// Share of true no-cluster series that were retained.
    pub e2: f64,
    /// The truly clustered set was empty; `e1` is the convention value 0.
    pub e1_undefined: bool,
    /// The true no-cluster set was empty; `e2` is the convention value 0.
    pub e2_undefined: bool,
}

/// `E1 = |Jᶜ ∩ Ĵ| / |Jᶜ|`, `E2 = |J ∩ Ĵᶜ| / |J|`.
pub fn detection_errors(j_hat: &[usize], j_true: &[usize], p: usize) -> Result<DetectionErrors> {
    for &i in j_hat.iter().chain(j_true) {
        if i >= p {
            return Err(Error::IndexOutOfRange { index: i, p });
        }
    }
    let hat: BTreeSet<usize> = j_hat.iter().copied().collect();
    let truth: BTreeSet<usize> = j_true.iter().copied().collect();
    let clustered = p - truth.len();
    let wrongly_flagged = hat.iter().filter(|i| !truth.contains(i)).count();
    let wrongly_kept = truth.iter().filter(|i| !hat.contains(i)).count();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(DetectionErrors {
        e1: ratio(wrongly_flagged, clustered),
        e2: ratio(wrongly_kept, truth.len()),
        e1_undefined: clustered == 0,
        e2_undefined: truth.is_empty(),
    })
}

fn dense_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let mut next = 0;
    let dense = labels
        .iter()
        .map(|l| {
            *map.entry(*l).or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    (dense, next)
}

/// Minimum number of disagreements over all label bijections.
///
/// Labels are arbitrary identifiers; the two sides may use different
/// numbers of distinct labels, in which case unmatched labels count as errors.
pub fn misclassification_count(assignments: &[usize], truth: &[usize]) -> Result<usize> {
    if assignments.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: assignments.len(),
        });
    }
    let (a, da) = dense_labels(assignments);
    let (t, dt) = dense_labels(truth);
    let k = da.max(dt);
    if k == 0 {
        return Ok(0);
    }
    let mut confusion = vec![vec![0i64; k]; k];
    for (&x, &y) in a.iter().zip(&t) {
        confusion[x][y] += 1;
    }
    let matched = if k <= EXHAUSTIVE_MATCHING_MAX {
        best_matching_exhaustive(&confusion)
    } else {
        best_matching_hungarian(&confusion)
    };
    Ok(assignments.len() - matched as usize)
}

/// Maximum total weight over permutations, by enumeration.
pub fn best_matching_exhaustive(weights: &[Vec<i64>]) -> i64 {
    fn go(row: usize, used: &mut Vec<bool>, w: &[Vec<i64>], acc: i64, best: &mut i64) {
        if row == w.len() {
            *best = (*best).max(acc);
            return;
        }
        for c in 0..w.len() {
            if !used[c] {
                used[c] = true;
                go(row + 1, used, w, acc + w[row][c], best);
                used[c] = false;
            }
        }
    }
    let mut best = i64::MIN;
    go(0, &mut vec![false; weights.len()], weights, 0, &mut best);
    best
}

/// Maximum total weight assignment via the Hungarian algorithm (O(k³)).
pub fn best_matching_hungarian(weights: &[Vec<i64>]) -> i64 {
    let n = weights.len();
    // minimize cost = -weight; 1-based potentials formulation
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| weights[p[j] - 1][j - 1]).sum()
}

/// Detection errors under one threshold rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaErrors {
    pub omega: f64,
    pub e1: f64,
    pub e2: f64,
}

/// Per-replication comparison against the simulated truth.
/// Stages that were not run leave their fields empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthComparison {
    pub r0_correct: Option<bool>,
    pub sum_correct: Option<bool>,
    pub baseline_r0_correct: Option<bool>,
    pub baseline_sum_correct: Option<bool>,
    pub subspace_error_strong: Option<ProjectionDistance>,
    pub subspace_error_weak: Option<ProjectionDistance>,
    pub e1: Option<f64>,
    pub e2: Option<f64>,
    /// Errors under the three named rules `p1`, `p2`, `p3`.
    pub omega_sweep: Option<[OmegaErrors; 3]>,
    pub tau: Option<usize>,
    pub tau_rate: Option<f64>,
    pub d_hat_correct: Option<bool>,
}

/// A single metric value for aggregation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Real(f64),
    Flag(bool),
}

impl TruthComparison {
    /// Named metric values in table order.
    pub fn metrics(&self) -> Vec<(&'static str, MetricValue)> {
        use MetricValue::{Flag, Real};
        let mut out = Vec::new();
        let mut flag = |name, v: Option<bool>| {
            if let Some(b) = v {
                out.push((name, Flag(b)));
            }
        };
        flag("r0_correct", self.r0_correct);
        flag("r0_plus_r_correct", self.sum_correct);
        flag("baseline_r0_correct", self.baseline_r0_correct);
        flag("baseline_r0_plus_r_correct", self.baseline_sum_correct);
        if let Some(d) = self.subspace_error_strong {
            out.push(("strong_subspace_frobenius", Real(d.frobenius)));
            out.push(("strong_subspace_operator", Real(d.operator)));
        }
        if let Some(d) = self.subspace_error_weak {
            out.push(("weak_subspace_frobenius", Real(d.frobenius)));
            out.push(("weak_subspace_operator", Real(d.operator)));
        }
        if let Some(v) = self.e1 {
            out.push(("e1", Real(v)));
        }
        if let Some(v) = self.e2 {
            out.push(("e2", Real(v)));
        }
        if let Some(sweep) = &self.omega_sweep {
            const E1: [&str; 3] = ["e1_omega_p1", "e1_omega_p2", "e1_omega_p3"];
            const E2: [&str; 3] = ["e2_omega_p1", "e2_omega_p2", "e2_omega_p3"];
            for (i, s) in sweep.iter().enumerate() {
                out.push((E1[i], Real(s.e1)));
            }
            for (i, s) in sweep.iter().enumerate() {
                out.push((E2[i], Real(s.e2)));
            }
        }
        if let Some(v) = self.tau {
            out.push(("tau", Real(v as f64)));
        }
        if let Some(v) = self.tau_rate {
            out.push(("tau_rate", Real(v)));
        }
        if let Some(b) = self.d_hat_correct {
            out.push(("d_hat_correct", Flag(b)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation (divisor `n − 1`; 0 for one replication).
    pub sd: f64,
    pub n_reps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn get(&self, metric: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.get(metric).map(|r| r.mean)
    }
}

/// Mean and sample sd per metric; flags become relative frequencies.
pub fn aggregate_replications(reps: &[TruthComparison]) -> SummaryTable {
    let mut order: Vec<&'static str> = Vec::new();
    let mut values: HashMap<&'static str, Vec<f64>> = HashMap::new();
    for rep in reps {
        for (name, v) in rep.metrics() {
            let x = match v {
                MetricValue::Real(x) => x,
                MetricValue::Flag(b) => f64::from(u8::from(b)),
            };
            values
                .entry(name)
                .or_insert_with(|| {
                    order.push(name);
                    Vec::new()
                })
                .push(x);
        }
    }
    let rows = order
        .into_iter()
        .map(|name| {
            let xs = &values[name];
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                metric: name.to_string(),
                mean,
                sd,
                n_reps: n,
            }
        })
        .collect();
    SummaryTable { rows }
}
