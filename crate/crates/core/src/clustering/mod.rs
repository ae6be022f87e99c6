//! No-cluster detection, cluster-count bound, similarity and K-means.

mod kmeans;
mod pipeline;

pub use kmeans::{
    elbow_select, kmeans, lloyd_from_centers, wcss_curve, KMeansConfig, KMeansResult,
    DEFAULT_ELBOW_THETA,
};
pub use pipeline::{
    cluster_pipeline, label_distribution, ClusteringResult, CountSource, LabelDistribution,
    PipelineConfig, Provenance,
};

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigenvalues_desc;
use crate::loadings::LoadingMatrix;

/// Threshold rule for the no-cluster row-norm test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OmegaChoice {
    /// `(r̂/p)^{1/2} / ln p`
    P1,
    /// `{r̂ / (p ln p)}^{1/2}`
    #[default]
    P2,
    /// `{r̂ / (p ln ln p)}^{1/2}`
    P3,
    Value(f64),
}

impl fmt::Display for OmegaChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OmegaChoice::P1 => f.write_str("p1"),
            OmegaChoice::P2 => f.write_str("p2"),
            OmegaChoice::P3 => f.write_str("p3"),
            OmegaChoice::Value(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for OmegaChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "p1" => Ok(OmegaChoice::P1),
            "p2" => Ok(OmegaChoice::P2),
            "p3" => Ok(OmegaChoice::P3),
            other => match other.parse::<f64>() {
                Ok(v) if v.is_finite() && v > 0.0 => Ok(OmegaChoice::Value(v)),
                _ => Err(Error::InvalidParameter(format!(
                    "omega must be p1, p2, p3 or a positive number, got {s:?}"
                ))),
            },
        }
    }
}

pub fn omega_threshold(choice: OmegaChoice, r_hat: usize, p: usize) -> Result<f64> {
    if let OmegaChoice::Value(v) = choice {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!("omega must be positive, got {v}")));
        }
        return Ok(v);
    }
    if r_hat == 0 {
        return Err(Error::InvalidParameter("omega needs r_hat >= 1".into()));
    }
    if p < 3 {
        return Err(Error::InvalidParameter(format!("omega needs p >= 3, got {p}")));
    }
    let (r, pf) = (r_hat as f64, p as f64);
    let ln_p = pf.ln();
    let value = match choice {
        OmegaChoice::P1 => (r / pf).sqrt() / ln_p,
        OmegaChoice::P2 => (r / (pf * ln_p)).sqrt(),
        OmegaChoice::P3 => {
            let lnln = ln_p.ln();
            if lnln <= 0.0 {
                return Err(Error::InvalidParameter(format!("ln ln p <= 0 for p={p}")));
            }
            (r / (pf * lnln)).sqrt()
        }
        OmegaChoice::Value(_) => unreachable!(),
    };
    Ok(value)
}

/// Indices `j` whose row of `B̂` has norm `≤ ω`, ascending.
pub fn detect_no_cluster(weak: &LoadingMatrix, omega: f64) -> Vec<usize> {
    weak.row_norms()
        .iter()
        .enumerate()
        .filter(|(_, n)| **n <= omega)
        .map(|(i, _)| i)
        .collect()
}

/// Number of eigenvalues of `|B̂B̂ᵀ|` strictly above `1 − 1/ln n`.
pub fn cluster_upper_bound(weak: &LoadingMatrix, n: usize) -> Result<usize> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("cluster bound needs n >= 3, got {n}")));
    }
    let b = weak.matrix();
    let abs = (b * b.transpose()).abs();
    let abs = (&abs + abs.transpose()) * 0.5;
    let cut = 1.0 - 1.0 / (n as f64).ln();
    let vals = sym_eigenvalues_desc(&abs)?;
    Ok(vals.iter().filter(|v| **v > cut).count())
}

/// `ρ̂_{ℓm} = |f_ℓᵀ f_m| / (‖f_ℓ‖ ‖f_m‖)` over the rows of `F̂`.
pub fn similarity_matrix(f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = f.nrows();
    let norms: Vec<f64> = f.row_iter().map(|r| r.norm()).collect();
    if let Some(row) = norms.iter().position(|n| !(*n > 0.0)) {
        return Err(Error::ZeroNormRow { row });
    }
    let gram = f * f.transpose();
    Ok(DMatrix::from_fn(m, m, |l, k| {
        if l == k {
            1.0
        } else {
            let (a, b) = if l < k { (l, k) } else { (k, l) };
            (gram[(a, b)].abs() / (norms[a] * norms[b])).min(1.0)
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loadings::LoadingKind;

    #[test]
    fn omega_p2_value() {
        let w = omega_threshold(OmegaChoice::P2, 10, 150).unwrap();
        let expected = (10.0f64 / (150.0 * 150.0f64.ln())).sqrt();
        assert!((w - expected).abs() < 1e-15);
        assert!((w - 0.115_347).abs() < 1e-6);
    }

    #[test]
    fn omega_ordering_and_passthrough() {
        let w1 = omega_threshold(OmegaChoice::P1, 4, 60).unwrap();
        let w2 = omega_threshold(OmegaChoice::P2, 4, 60).unwrap();
        let w3 = omega_threshold(OmegaChoice::P3, 4, 60).unwrap();
        assert!(w1 < w2 && w2 < w3);
        assert_eq!(omega_threshold(OmegaChoice::Value(0.05), 4, 60).unwrap(), 0.05);
        assert!(omega_threshold(OmegaChoice::P3, 4, 2).is_err());
        assert!(omega_threshold(OmegaChoice::Value(-1.0), 4, 60).is_err());
    }

    #[test]
    fn omega_parses() {
        assert_eq!("P2".parse::<OmegaChoice>().unwrap(), OmegaChoice::P2);
        assert_eq!("0.1".parse::<OmegaChoice>().unwrap(), OmegaChoice::Value(0.1));
        assert!("zero".parse::<OmegaChoice>().is_err());
        assert!("0".parse::<OmegaChoice>().is_err());
    }

    #[test]
    fn crafted_row_norms() {
        let b = DMatrix::from_row_slice(3, 1, &[0.01, 0.2, 0.05]);
        let l = LoadingMatrix::unchecked(b, LoadingKind::Weak);
        assert_eq!(detect_no_cluster(&l, 0.06), vec![0, 2]);
        let zero = LoadingMatrix::unchecked(DMatrix::from_row_slice(2, 1, &[0.0, 1.0]), LoadingKind::Weak);
        assert_eq!(detect_no_cluster(&zero, 1e-300), vec![0]);
    }

    #[test]
    fn exact_blocks_give_exact_bound() {
        // three single-column blocks of sizes 2, 3, 1 plus two zero rows
        let mut b = DMatrix::zeros(8, 3);
        let s2 = 0.5f64.sqrt();
        let s3 = (1.0f64 / 3.0).sqrt();
        b[(0, 0)] = s2;
        b[(1, 0)] = s2;
        for i in 2..5 {
            b[(i, 1)] = s3;
        }
        b[(5, 2)] = 1.0;
        let l = LoadingMatrix::from_orthonormal(b, LoadingKind::Weak).unwrap();
        for n in [3, 10, 400, 100_000] {
            assert_eq!(cluster_upper_bound(&l, n).unwrap(), 3);
        }
        assert!(cluster_upper_bound(&l, 2).is_err());
    }

    #[test]
    fn similarity_examples() {
        let f = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 2.0]);
        let s = similarity_matrix(&f).unwrap();
        let h = 0.5f64.sqrt();
        assert_eq!(s[(0, 0)], 1.0);
        assert!((s[(0, 1)] - h).abs() < 1e-15);
        assert_eq!(s[(0, 2)], 0.0);
        assert_eq!(s, s.transpose());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(similarity_matrix(&bad), Err(Error::ZeroNormRow { row: 1 })));
    }
}
