//! The five-step clustering procedure composed end to end.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::kmeans::{elbow_select, kmeans, wcss_curve, KMeansConfig, DEFAULT_ELBOW_THETA};
use super::{
    cluster_upper_bound, detect_no_cluster, omega_threshold, similarity_matrix, OmegaChoice,
};
use crate::error::{Error, Result};
use crate::factor_count::{cumulative_ratio_sequence, default_j0, FactorCountReport, DEFAULT_K0};
use crate::loadings::{estimate_strong_loadings, estimate_weak_loadings, LoadingKind, LoadingMatrix};
use crate::panel::TimeSeriesPanel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k0: usize,
    /// Defaults to [`default_j0`] of the panel width.
    pub j0: Option<usize>,
    /// Manual `(r0, r)`; skips the ratio-based selection.
    pub counts: Option<(usize, usize)>,
    pub omega: OmegaChoice,
    /// Manual cluster count; otherwise the elbow over `1..=d̂` is used.
    pub d: Option<usize>,
    pub kmeans: KMeansConfig,
    pub elbow_theta: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k0: DEFAULT_K0,
            j0: None,
            counts: None,
            omega: OmegaChoice::P2,
            d: None,
            kmeans: KMeansConfig::default(),
            elbow_theta: DEFAULT_ELBOW_THETA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountSource {
    Estimated,
    Override,
    Elbow,
}

/// Every tuning value that went into a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub k0: usize,
    pub j0: usize,
    pub r0: usize,
    pub r: usize,
    pub counts_source: CountSource,
    pub omega_choice: String,
    pub omega: f64,
    /// Raw count of eigenvalues of `|B̂B̂ᵀ|` above `1 − 1/ln n`.
    pub d_hat: usize,
    pub d_used: usize,
    pub d_source: CountSource,
    pub elbow_theta: f64,
    pub kmeans: KMeansConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub provenance: Provenance,
    /// Present when the counts were estimated.
    pub factor_report: Option<FactorCountReport>,
    pub strong: LoadingMatrix,
    pub weak: LoadingMatrix,
    /// Series classified as belonging to no cluster, ascending.
    pub no_cluster_indices: Vec<usize>,
    /// Complement of `no_cluster_indices`, ascending; rows of `similarity`.
    pub retained_indices: Vec<usize>,
    pub d_hat: usize,
    pub d_used: usize,
    /// Zero-based cluster of each retained series.
    pub assignments: Vec<usize>,
    pub similarity: DMatrix<f64>,
    /// `wcss_curve[i]` is the best WCSS with `i + 1` clusters.
    pub wcss_curve: Vec<f64>,
}

impl ClusteringResult {
    /// Cluster of every series, `None` for the no-cluster set.
    pub fn full_assignments(&self, p: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; p];
        for (&i, &c) in self.retained_indices.iter().zip(&self.assignments) {
            out[i] = Some(c);
        }
        out
    }
}

pub fn cluster_pipeline(panel: &TimeSeriesPanel, config: &PipelineConfig) -> Result<ClusteringResult> {
    let p = panel.p();
    let j0 = config.j0.unwrap_or_else(|| default_j0(p));

    let (r0, r, factor_report, counts_source) = match config.counts {
        Some((r0, r)) => (r0, r, None, CountSource::Override),
        None => {
            let mut report = cumulative_ratio_sequence(panel, config.k0, j0)?;
            let counts = report.select()?;
            (counts.r0, counts.r, Some(report), CountSource::Estimated)
        }
    };

    let strong = if r0 == 0 {
        LoadingMatrix::empty(p, LoadingKind::Strong)
    } else {
        estimate_strong_loadings(panel, config.k0, r0)?
    };
    let weak = estimate_weak_loadings(panel, &strong, config.k0, r)?;

    let omega = omega_threshold(config.omega, r, p)?;
    let no_cluster_indices = detect_no_cluster(&weak, omega);
    let retained_indices: Vec<usize> = (0..p)
        .filter(|i| no_cluster_indices.binary_search(i).is_err())
        .collect();
    let m = retained_indices.len();
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "only {m} series retained after no-cluster detection; need at least 2"
        )));
    }

    let d_hat = cluster_upper_bound(&weak, panel.n())?;
    let f = DMatrix::from_fn(m, weak.r(), |i, j| weak.matrix()[(retained_indices[i], j)]);
    let similarity = similarity_matrix(&f)?;

    let d_cap = d_hat.clamp(1, m);
    let (d_used, d_source) = match config.d {
        Some(d) if d == 0 || d > m => {
            return Err(Error::InvalidParameter(format!(
                "cluster count d={d} must satisfy 1 <= d <= {m}"
            )))
        }
        Some(d) => {
            if d > d_hat {
                log::warn!("cluster count d={d} exceeds the bound d_hat={d_hat}");
            }
            (d, CountSource::Override)
        }
        None => (0, CountSource::Elbow),
    };
    let curve_max = d_cap.max(d_used);
    let curve = wcss_curve(&similarity, curve_max, &config.kmeans)?;
    let wcss: Vec<f64> = curve.iter().map(|c| c.wcss).collect();
    let d_used = match d_source {
        CountSource::Override => d_used,
        _ => elbow_select(&wcss[..d_cap], config.elbow_theta),
    };
    let assignments = match curve.get(d_used - 1) {
        Some(sol) => sol.assignments.clone(),
        None => kmeans(&similarity, d_used, &config.kmeans)?.assignments,
    };

    Ok(ClusteringResult {
        provenance: Provenance {
            k0: config.k0,
            j0,
            r0,
            r,
            counts_source,
            omega_choice: config.omega.to_string(),
            omega,
            d_hat,
            d_used,
            d_source,
            elbow_theta: config.elbow_theta,
            kmeans: config.kmeans,
        },
        factor_report,
        strong,
        weak,
        no_cluster_indices,
        retained_indices,
        d_hat,
        d_used,
        assignments,
        similarity,
        wcss_curve: wcss,
    })
}

/// Row-normalized label-by-cluster matrix `n_ij / n_i` over retained series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    /// Row labels, sorted.
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    pub fractions: Vec<Vec<f64>>,
}

pub fn label_distribution(labels: &[String], result: &ClusteringResult) -> Result<LabelDistribution> {
    let mut rows: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (&i, &c) in result.retained_indices.iter().zip(&result.assignments) {
        let label = labels.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            p: labels.len(),
        })?;
        rows.entry(label.as_str()).or_insert_with(|| vec![0; result.d_used])[c] += 1;
    }
    let mut out = LabelDistribution {
        labels: Vec::new(),
        counts: Vec::new(),
        fractions: Vec::new(),
    };
    for (label, counts) in rows {
        let total: usize = counts.iter().sum();
        out.labels.push(label.to_string());
        out.fractions
            .push(counts.iter().map(|&c| c as f64 / total as f64).collect());
        out.counts.push(counts);
    }
    Ok(out)
}
