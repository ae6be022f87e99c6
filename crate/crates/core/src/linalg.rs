//! Dense symmetric linear algebra helpers shared by the estimation modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    /// Columns are unit eigenvectors matching `values`.
    pub vectors: DMatrix<f64>,
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn sym_eigen_desc(m: &DMatrix<f64>) -> Result<SortedEigen> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite input matrix".into()));
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure("symmetric eigen-solver did not converge".into()))?;
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps index order among exactly equal eigenvalues
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SortedEigen { values, vectors })
}

pub fn sym_eigenvalues_desc(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite input matrix".into()));
    }
    let mut vals: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    vals.sort_by(|a, b| b.total_cmp(a));
    Ok(vals)
}

/// Flip each column so that its largest-magnitude entry is positive
/// (ties resolved by the lowest row index).
pub fn normalize_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if best_abs > 0.0 && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Largest absolute entry of `QᵀQ − I`.
pub fn gram_deviation(q: &DMatrix<f64>) -> f64 {
    let gram = q.transpose() * q;
    let mut dev = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gram[(i, j)] - target).abs());
        }
    }
    dev
}

/// Condition number of a symmetric positive semidefinite matrix.
pub fn psd_condition_number(m: &DMatrix<f64>) -> Result<f64> {
    let vals = sym_eigenvalues_desc(m)?;
    let max = vals.first().copied().unwrap_or(0.0);
    let min = vals.last().copied().unwrap_or(0.0);
    if max <= 0.0 || min <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}

/// Projection onto the column space of a full-column-rank matrix,
/// `X (XᵀX)⁻¹ Xᵀ`.
pub fn projection_onto(x: &DMatrix<f64>, max_condition: f64) -> Result<DMatrix<f64>> {
    let p = x.nrows();
    if x.ncols() == 0 {
        return Ok(DMatrix::zeros(p, p));
    }
    let gram = x.transpose() * x;
    let condition = psd_condition_number(&gram)?;
    if !(condition <= max_condition) {
        return Err(Error::RankDeficient { condition });
    }
    let chol = gram
        .cholesky()
        .ok_or(Error::RankDeficient { condition })?;
    let solved = chol.solve(&x.transpose());
    Ok(symmetrize(&(x * solved)))
}

/// Operator (spectral) norm of a symmetric matrix.
pub fn sym_operator_norm(m: &DMatrix<f64>) -> Result<f64> {
    let vals = sym_eigenvalues_desc(m)?;
    Ok(vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
}
