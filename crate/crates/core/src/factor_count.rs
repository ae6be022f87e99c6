//! Estimation of the numbers of strong and weak factors from eigenvalue ratios.
//!
//! The cumulative method pools the eigenvalues of `Σ̂_y(k)Σ̂_y(k)ᵀ` over lags
//! with weights `1 − k/n` before taking consecutive ratios; the single-matrix
//! baseline takes ratios of the eigenvalues of `M̂` directly. Both select the
//! two largest local maxima of the ratio sequence.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigenvalues_desc;
use crate::panel::{lag_autocovs, lag_product, pooled_matrix, TimeSeriesPanel};

/// Relative zero guard on ratio denominators.
pub const DENOMINATOR_GUARD: f64 = 1e-14;

/// Default lag horizon.
pub const DEFAULT_K0: usize = 5;

/// `⌊p/4⌋`, at least 8, never more than `p`.
pub fn default_j0(p: usize) -> usize {
    (p / 4).max(8).min(p)
}

/// One entry `R̂_j` of the ratio sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ratio {
    Value(f64),
    /// Numerator above the zero guard, denominator below it: the
    /// eigenvalue sequence drops to zero right after index `j`.
    RankEdge,
    /// Both sides below the zero guard (`0/0`); excluded from the search.
    Truncated,
}

impl Ratio {
    fn rank_value(self) -> Option<f64> {
        match self {
            Ratio::Value(v) => Some(v),
            Ratio::RankEdge => Some(f64::INFINITY),
            Ratio::Truncated => None,
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Value(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioMethod {
    /// Lag-weighted cumulative eigenvalues of `Σ̂_y(k)Σ̂_y(k)ᵀ`.
    Cumulative,
    /// Eigenvalues of the pooled matrix `M̂`.
    SingleMatrix,
}

/// Selected numbers of strong (`r0`) and weak (`r`) factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorCounts {
    pub r0: usize,
    pub r: usize,
    /// The second pick tied in value with a further local maximum and
    /// was resolved toward the smaller index.
    pub tie_broken: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCountReport {
    pub method: RatioMethod,
    pub k0: usize,
    pub j0: usize,
    /// `R̂_1 ..= R̂_{J0−1}`; entry `i` is `R̂_{i+1}`.
    pub ratios: Vec<Ratio>,
    /// Indices `j` (1-based, as factor counts) of strict local maxima.
    pub local_max_indices: Vec<usize>,
    /// Local maxima ordered from largest to smallest ratio.
    pub ranked_local_maxima: Vec<usize>,
    pub selected: Option<FactorCounts>,
    /// Descending eigenvalues per lag (cumulative) or of `M̂` (single matrix).
    pub per_lag_eigenvalues: Vec<Vec<f64>>,
}

impl FactorCountReport {
    fn from_ratios(
        method: RatioMethod,
        k0: usize,
        j0: usize,
        ratios: Vec<Ratio>,
        per_lag_eigenvalues: Vec<Vec<f64>>,
    ) -> Self {
        let local_max_indices = local_maxima(&ratios);
        let ranked_local_maxima = rank_maxima(&ratios, &local_max_indices);
        Self {
            method,
            k0,
            j0,
            ratios,
            local_max_indices,
            ranked_local_maxima,
            selected: None,
            per_lag_eigenvalues,
        }
    }

    /// Fill `selected`; leaves it empty and returns the error when
    /// fewer than two local maxima exist.
    pub fn select(&mut self) -> Result<FactorCounts> {
        let counts = select_from_ratios(&self.ratios)?;
        self.selected = Some(counts);
        Ok(counts)
    }
}

fn check_args(panel: &TimeSeriesPanel, k0: usize, j0: usize) -> Result<()> {
    if j0 < 2 || j0 > panel.p() {
        return Err(Error::InvalidParameter(format!(
            "J0={j0} must satisfy 2 <= J0 <= p={}",
            panel.p()
        )));
    }
    if k0 >= panel.n() {
        return Err(Error::LagOutOfRange { lag: k0, n: panel.n() });
    }
    Ok(())
}

/// Consecutive ratios `sums[j−1] / sums[j]` for `j = 1..J0−1` with the zero guard.
fn guarded_ratios(sums: &[f64], j0: usize) -> Vec<Ratio> {
    let top = sums.first().copied().unwrap_or(0.0).max(0.0);
    let guard = DENOMINATOR_GUARD * top;
    (1..j0)
        .map(|j| {
            let num = sums[j - 1];
            let den = sums[j];
            if den > guard {
                Ratio::Value(num / den)
            } else if num > guard {
                Ratio::RankEdge
            } else {
                Ratio::Truncated
            }
        })
        .collect()
}

/// `R̂_j = Σ_k (1 − k/n) λ̂_{k,j} / Σ_k (1 − k/n) λ̂_{k,j+1}`.
pub fn cumulative_ratio_sequence(
    panel: &TimeSeriesPanel,
    k0: usize,
    j0: usize,
) -> Result<FactorCountReport> {
    check_args(panel, k0, j0)?;
    let covs = lag_autocovs(panel, k0)?;
    let per_lag: Vec<Vec<f64>> = covs
        .par_iter()
        .map(|c| sym_eigenvalues_desc(&lag_product(c)))
        .collect::<Result<_>>()?;
    let n = panel.n() as f64;
    let mut sums = vec![0.0; j0];
    for (k, eig) in per_lag.iter().enumerate() {
        let w = 1.0 - k as f64 / n;
        for (s, l) in sums.iter_mut().zip(eig) {
            *s += w * l;
        }
    }
    let ratios = guarded_ratios(&sums, j0);
    Ok(FactorCountReport::from_ratios(
        RatioMethod::Cumulative,
        k0,
        j0,
        ratios,
        per_lag,
    ))
}

/// Ratios `λ̃_j / λ̃_{j+1}` of the eigenvalues of `M̂`.
pub fn single_matrix_ratio_baseline(
    panel: &TimeSeriesPanel,
    k0: usize,
    j0: usize,
) -> Result<FactorCountReport> {
    check_args(panel, k0, j0)?;
    let pooled = pooled_matrix(panel, k0)?;
    let eig = sym_eigenvalues_desc(&pooled.matrix)?;
    let ratios = guarded_ratios(&eig[..j0], j0);
    Ok(FactorCountReport::from_ratios(
        RatioMethod::SingleMatrix,
        k0,
        j0,
        ratios,
        vec![eig],
    ))
}

/// Strict local maxima over `j = 1..=len`, with `R̂_0 = 1`.
pub fn local_maxima(ratios: &[Ratio]) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, r) in ratios.iter().enumerate() {
        let Some(v) = r.rank_value() else { continue };
        let left = if i == 0 { Some(1.0) } else { ratios[i - 1].rank_value() };
        let right = ratios.get(i + 1).and_then(|r| r.rank_value());
        let above_left = left.map_or(true, |l| v > l);
        let above_right = right.map_or(true, |r| v > r);
        if above_left && above_right {
            out.push(i + 1);
        }
    }
    out
}

fn rank_maxima(ratios: &[Ratio], maxima: &[usize]) -> Vec<usize> {
    let mut ranked = maxima.to_vec();
    ranked.sort_by(|&a, &b| {
        let va = ratios[a - 1].rank_value().unwrap_or(f64::NEG_INFINITY);
        let vb = ratios[b - 1].rank_value().unwrap_or(f64::NEG_INFINITY);
        vb.partial_cmp(&va).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });
    ranked
}

/// `r̂₀ = min(τ̂₁, τ̂₂)`, `r̂₀ + r̂ = max(τ̂₁, τ̂₂)` for the two largest local maxima.
pub fn select_from_ratios(ratios: &[Ratio]) -> Result<FactorCounts> {
    let maxima = local_maxima(ratios);
    if maxima.len() < 2 {
        return Err(Error::TooFewLocalMaxima { found: maxima.len() });
    }
    let ranked = rank_maxima(ratios, &maxima);
    let (a, b) = (ranked[0], ranked[1]);
    let tie_broken = ranked
        .get(2)
        .map_or(false, |&c| ratios[c - 1].rank_value() == ratios[b - 1].rank_value());
    if tie_broken {
        log::warn!("tie between local maxima at j={b} and j={}; kept the smaller index", ranked[2]);
    }
    Ok(FactorCounts {
        r0: a.min(b),
        r: a.max(b) - a.min(b),
        tie_broken,
    })
}

pub fn select_factor_counts(report: &FactorCountReport) -> Result<FactorCounts> {
    select_from_ratios(&report.ratios)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn values(v: &[f64]) -> Vec<Ratio> {
        v.iter().map(|&x| Ratio::Value(x)).collect()
    }

    #[test]
    fn hand_checkable_sequence() {
        let r = values(&[5.0, 1.1, 8.0, 1.0, 1.0]);
        assert_eq!(local_maxima(&r), vec![1, 3]);
        let c = select_from_ratios(&r).unwrap();
        assert_eq!((c.r0, c.r), (1, 2));
        assert!(!c.tie_broken);
    }

    #[test]
    fn monotone_decreasing_has_single_maximum() {
        let r = values(&[4.0, 3.0, 2.0, 1.5]);
        assert_eq!(local_maxima(&r), vec![1]);
        assert!(matches!(
            select_from_ratios(&r),
            Err(Error::TooFewLocalMaxima { found: 1 })
        ));
        // below R̂_0 = 1 nothing qualifies
        let r = values(&[0.9, 0.8, 0.7]);
        assert!(local_maxima(&r).is_empty());
    }

    #[test]
    fn right_boundary_needs_only_left_neighbour() {
        let r = values(&[3.0, 1.0, 2.0]);
        assert_eq!(local_maxima(&r), vec![1, 3]);
    }

    #[test]
    fn ties_go_to_smaller_index_and_are_flagged() {
        let r = values(&[9.0, 1.0, 4.0, 1.0, 4.0, 1.0]);
        let c = select_from_ratios(&r).unwrap();
        assert_eq!((c.r0, c.r), (1, 2));
        assert!(c.tie_broken);
    }

    #[test]
    fn rank_edge_is_largest_and_truncated_is_skipped() {
        let r = vec![
            Ratio::Value(3.0),
            Ratio::Value(1.2),
            Ratio::RankEdge,
            Ratio::Truncated,
        ];
        assert_eq!(local_maxima(&r), vec![1, 3]);
        let c = select_from_ratios(&r).unwrap();
        assert_eq!((c.r0, c.r), (1, 2));
    }

    #[test]
    fn rank_one_panel_has_spike_at_one() {
        let a = [0.5, -0.5, 0.5, 0.5];
        let x: Vec<f64> = (0..50).map(|t| ((t * 7 % 11) as f64 - 5.0) * 0.3).collect();
        let panel = TimeSeriesPanel::new(DMatrix::from_fn(4, 50, |i, t| a[i] * x[t])).unwrap();
        for report in [
            cumulative_ratio_sequence(&panel, 2, 4).unwrap(),
            single_matrix_ratio_baseline(&panel, 2, 4).unwrap(),
        ] {
            assert_eq!(report.ratios[0], Ratio::RankEdge);
            assert_eq!(report.local_max_indices, vec![1]);
        }
    }

    #[test]
    fn j0_bounds_checked() {
        let panel = TimeSeriesPanel::from_series_rows(2, 3, &[1.0, 2.0, 4.0, 0.5, 1.0, -1.0]).unwrap();
        assert!(cumulative_ratio_sequence(&panel, 0, 1).is_err());
        assert!(cumulative_ratio_sequence(&panel, 0, 3).is_err());
        assert!(cumulative_ratio_sequence(&panel, 3, 2).is_err());
        assert!(cumulative_ratio_sequence(&panel, 0, 2).is_ok());
    }

    #[test]
    fn default_j0_rule() {
        assert_eq!(default_j0(150), 37);
        assert_eq!(default_j0(20), 8);
        assert_eq!(default_j0(5), 5);
    }
}
