//! Strong and weak loading-space estimation from the pooled matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram_deviation, normalize_signs, projection_onto, sym_eigen_desc, sym_eigenvalues_desc, symmetrize};
use crate::panel::{pooled_matrix, residualize, TimeSeriesPanel, ORTHONORMAL_TOL};

/// Relative eigen-gap at the cut below which the returned basis is flagged.
pub const DEGENERATE_GAP: f64 = 1e-12;

/// Condition-number ceiling for Gram inverses in truth-side projections.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadingKind {
    Strong,
    Weak,
}

/// A p × r matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingMatrix {
    matrix: DMatrix<f64>,
    kind: LoadingKind,
    /// Eigenvalues of the pooled matrix belonging to the returned columns.
    eigenvalues: Vec<f64>,
    /// Set when the eigen-gap at the r-th cut is below [`DEGENERATE_GAP`].
    degenerate_cut: bool,
}

impl LoadingMatrix {
    /// The r = 0 loading: a p × 0 matrix.
    pub fn empty(p: usize, kind: LoadingKind) -> Self {
        Self {
            matrix: DMatrix::zeros(p, 0),
            kind,
            eigenvalues: Vec::new(),
            degenerate_cut: false,
        }
    }

    pub fn from_orthonormal(matrix: DMatrix<f64>, kind: LoadingKind) -> Result<Self> {
        if matrix.ncols() > 0 {
            let deviation = gram_deviation(&matrix);
            if deviation > ORTHONORMAL_TOL {
                return Err(Error::NotOrthonormal { deviation });
            }
        }
        Ok(Self {
            matrix,
            kind,
            eigenvalues: Vec::new(),
            degenerate_cut: false,
        })
    }

    #[cfg(test)]
    pub(crate) fn unchecked(matrix: DMatrix<f64>, kind: LoadingKind) -> Self {
        Self {
            matrix,
            kind,
            eigenvalues: Vec::new(),
            degenerate_cut: false,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> LoadingKind {
        self.kind
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn r(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn degenerate_cut(&self) -> bool {
        self.degenerate_cut
    }

    /// Euclidean norm of every row.
    pub fn row_norms(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.norm()).collect()
    }
}

fn leading_eigenvectors(m: &DMatrix<f64>, r: usize, kind: LoadingKind) -> Result<LoadingMatrix> {
    let eig = sym_eigen_desc(m)?;
    let mut cols = eig.vectors.columns(0, r).into_owned();
    normalize_signs(&mut cols);
    let values: Vec<f64> = eig.values.iter().take(r).copied().collect();
    let scale = eig.values[0].abs().max(f64::MIN_POSITIVE);
    let degenerate_cut =
        r < m.nrows() && (eig.values[r - 1] - eig.values[r]) / scale < DEGENERATE_GAP;
    if degenerate_cut {
        log::warn!("eigen-gap at cut r={r} is degenerate; only the span is meaningful");
    }
    Ok(LoadingMatrix {
        matrix: cols,
        kind,
        eigenvalues: values,
        degenerate_cut,
    })
}

/// Top-`r0` eigenvectors of the pooled matrix `M̂`.
pub fn estimate_strong_loadings(
    panel: &TimeSeriesPanel,
    k0: usize,
    r0: usize,
) -> Result<LoadingMatrix> {
    let p = panel.p();
    if r0 == 0 || r0 >= p {
        return Err(Error::InvalidParameter(format!(
            "strong factor count r0={r0} must satisfy 1 <= r0 < p={p}"
        )));
    }
    let pooled = pooled_matrix(panel, k0)?;
    leading_eigenvectors(&pooled.matrix, r0, LoadingKind::Strong)
}

/// Top-`r` eigenvectors of the pooled matrix of `(I − ÂÂᵀ) y_t`.
pub fn estimate_weak_loadings(
    panel: &TimeSeriesPanel,
    strong: &LoadingMatrix,
    k0: usize,
    r: usize,
) -> Result<LoadingMatrix> {
    let p = panel.p();
    if strong.p() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: strong.p(),
        });
    }
    if r == 0 || r + strong.r() >= p {
        return Err(Error::InvalidParameter(format!(
            "weak factor count r={r} must satisfy 1 <= r < p - r0 = {}",
            p - strong.r()
        )));
    }
    let resid = residualize(panel, strong)?;
    let pooled = pooled_matrix(&resid, k0)?;
    leading_eigenvectors(&pooled.matrix, r, LoadingKind::Weak)
}

/// `QQᵀ` for an orthonormal loading.
pub fn projection(loading: &LoadingMatrix) -> DMatrix<f64> {
    let q = loading.matrix();
    symmetrize(&(q * q.transpose()))
}

/// Projection onto the span of `(I − P_A) (Bᵀ, 0ᵀ)ᵀ`, the population target of `B̂B̂ᵀ`.
///
/// Neither input has to be orthonormal; both projections use the Gram inverse.
pub fn oracle_weak_projection(a_true: &DMatrix<f64>, b_padded: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a_true.nrows() != b_padded.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a_true.nrows(),
            actual: b_padded.nrows(),
        });
    }
    let p = a_true.nrows();
    let pa = projection_onto(a_true, MAX_CONDITION)?;
    let b_star = (DMatrix::identity(p, p) - pa) * b_padded;
    // a column of B lying in span(A) leaves a near-zero column behind
    let scale = sym_eigenvalues_desc(&(b_padded.transpose() * b_padded))?
        .first()
        .copied()
        .unwrap_or(0.0);
    if let Some(&smallest) = sym_eigenvalues_desc(&(b_star.transpose() * &b_star))?.last() {
        if !(smallest * MAX_CONDITION > scale) {
            return Err(Error::RankDeficient {
                condition: scale / smallest.max(0.0),
            });
        }
    }
    projection_onto(&b_star, MAX_CONDITION)
}
