//! Panel data model, CSV ingestion and lagged autocovariance matrices.

use std::collections::{HashMap, HashSet};
use std::io::Read;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram_deviation, symmetrize};
use crate::loadings::LoadingMatrix;

/// Tolerance on `QᵀQ − I` accepted by [`residualize`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// `p` series observed at `n` equally spaced time points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    /// p × n, one row per series.
    values: DMatrix<f64>,
    series_ids: Option<Vec<String>>,
    labels: Option<Vec<String>>,
}

/// How rows of an input CSV map onto the panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// One time point per line; the header names the series.
    #[default]
    RowsAreTime,
    /// One series per line; the first column holds the series id.
    RowsAreSeries,
}

impl TimeSeriesPanel {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (p, n) = values.shape();
        if p < 2 || n < 2 {
            return Err(Error::PanelTooSmall { p, n });
        }
        if let Some((idx, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::BadCell {
                line: idx % p + 1,
                column: idx / p + 1,
                value: v.to_string(),
            });
        }
        Ok(Self {
            values,
            series_ids: None,
            labels: None,
        })
    }

    /// Build from row-major data, one row per series.
    pub fn from_series_rows(p: usize, n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != p * n {
            return Err(Error::DimensionMismatch {
                expected: p * n,
                actual: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(p, n, data))
    }

    pub fn with_series_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                actual: ids.len(),
            });
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateSeriesId(id.clone()));
            }
        }
        self.series_ids = Some(ids);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                actual: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Number of series.
    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    /// Number of time points.
    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn series_ids(&self) -> Option<&[String]> {
        self.series_ids.as_deref()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Id of series `i`, falling back to its zero-based index.
    pub fn series_name(&self, i: usize) -> String {
        match &self.series_ids {
            Some(ids) => ids[i].clone(),
            None => i.to_string(),
        }
    }

    /// Reorder series so that output row `i` is input row `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let p = self.p();
        if order.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: order.len(),
            });
        }
        let values = DMatrix::from_fn(p, self.n(), |i, t| self.values[(order[i], t)]);
        let pick = |v: &Vec<String>| order.iter().map(|&i| v[i].clone()).collect();
        Ok(Self {
            values,
            series_ids: self.series_ids.as_ref().map(pick),
            labels: self.labels.as_ref().map(pick),
        })
    }

    /// Copy with every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut out = self.clone();
        out.values *= c;
        if out.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale {c} overflows")));
        }
        Ok(out)
    }

    /// Series with the full-sample mean of each row subtracted.
    pub fn centered(&self) -> DMatrix<f64> {
        let mut c = self.values.clone();
        for mut row in c.row_iter_mut() {
            let mean = row.mean();
            row.add_scalar_mut(-mean);
        }
        c
    }

    /// Attach category labels from a two-column `series_id,label` CSV with a header row.
    pub fn attach_labels_csv<R: Read>(self, source: R) -> Result<Self> {
        let ids = self
            .series_ids
            .clone()
            .ok_or_else(|| Error::InvalidParameter("labels require series ids".into()))?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let mut map = HashMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            if rec.len() != 2 {
                return Err(Error::RaggedRow {
                    line,
                    expected: 2,
                    found: rec.len(),
                });
            }
            map.insert(rec[0].to_string(), rec[1].to_string());
        }
        let labels = ids
            .iter()
            .map(|id| {
                map.get(id)
                    .cloned()
                    .ok_or_else(|| Error::InvalidParameter(format!("no label for series {id:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.with_labels(labels)
    }
}

/// Parse a panel from CSV. The first line is a header; lines starting
/// with `#` are skipped.
pub fn load_panel<R: Read>(source: R, orientation: Orientation) -> Result<TimeSeriesPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| Error::Csv(e.to_string()))?,
        None => return Err(Error::PanelTooSmall { p: 0, n: 0 }),
    };
    let width = header.len();
    let skip = match orientation {
        Orientation::RowsAreTime => 0,
        Orientation::RowsAreSeries => 1,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut row_ids = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != width {
            return Err(Error::RaggedRow {
                line,
                expected: width,
                found: rec.len(),
            });
        }
        if skip == 1 {
            row_ids.push(rec[0].to_string());
        }
        let mut row = Vec::with_capacity(width - skip);
        for (col, cell) in rec.iter().enumerate().skip(skip) {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(Error::BadCell {
                        line,
                        column: col + 1,
                        value: cell.to_string(),
                    })
                }
            }
        }
        rows.push(row);
    }
    let (values, ids) = match orientation {
        Orientation::RowsAreTime => {
            let n = rows.len();
            let p = width;
            let values = DMatrix::from_fn(p, n, |i, t| rows[t][i]);
            (values, header.iter().map(str::to_string).collect::<Vec<_>>())
        }
        Orientation::RowsAreSeries => {
            let p = rows.len();
            let n = width.saturating_sub(1);
            let values = DMatrix::from_fn(p, n, |i, t| rows[i][t]);
            (values, row_ids)
        }
    };
    TimeSeriesPanel::new(values)?.with_series_ids(ids)
}

/// Sample lag-k autocovariance `Σ̂_y(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagCovariance {
    pub lag: usize,
    pub matrix: DMatrix<f64>,
}

/// `M̂ = Σ_{k ≤ k0} Σ̂_y(k) Σ̂_y(k)ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledMatrix {
    pub k0: usize,
    pub matrix: DMatrix<f64>,
}

fn lag_from_centered(centered: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = centered.ncols();
    let lead = centered.columns(k, n - k);
    let base = centered.columns(0, n - k);
    (lead * base.transpose()) / n as f64
}

/// `Σ̂_y(k) = (1/n) Σ_{t=1}^{n−k} (y_{t+k} − ȳ)(y_t − ȳ)ᵀ`, full-sample mean, divisor n.
pub fn lag_autocov(panel: &TimeSeriesPanel, k: usize) -> Result<LagCovariance> {
    if k >= panel.n() {
        return Err(Error::LagOutOfRange { lag: k, n: panel.n() });
    }
    let centered = panel.centered();
    Ok(LagCovariance {
        lag: k,
        matrix: lag_from_centered(&centered, k),
    })
}

/// All lag covariances for `k = 0..=k0`, in lag order.
pub fn lag_autocovs(panel: &TimeSeriesPanel, k0: usize) -> Result<Vec<LagCovariance>> {
    if k0 >= panel.n() {
        return Err(Error::LagOutOfRange { lag: k0, n: panel.n() });
    }
    let centered = panel.centered();
    Ok((0..=k0)
        .into_par_iter()
        .map(|k| LagCovariance {
            lag: k,
            matrix: lag_from_centered(&centered, k),
        })
        .collect())
}

/// `Σ̂_y(k) Σ̂_y(k)ᵀ`, symmetrized.
pub fn lag_product(cov: &LagCovariance) -> DMatrix<f64> {
    symmetrize(&(&cov.matrix * cov.matrix.transpose()))
}

pub fn pooled_matrix(panel: &TimeSeriesPanel, k0: usize) -> Result<PooledMatrix> {
    let covs = lag_autocovs(panel, k0)?;
    let products: Vec<DMatrix<f64>> = covs
        .par_iter()
        .map(|c| &c.matrix * c.matrix.transpose())
        .collect();
    // summed in lag order so the result does not depend on scheduling
    let p = panel.p();
    let sum = products
        .iter()
        .fold(DMatrix::zeros(p, p), |acc, m| acc + m);
    Ok(PooledMatrix {
        k0,
        matrix: symmetrize(&sum),
    })
}

/// Replace every column `y_t` with `(I − QQᵀ) y_t`.
pub fn residualize(panel: &TimeSeriesPanel, loading: &LoadingMatrix) -> Result<TimeSeriesPanel> {
    let q = loading.matrix();
    if q.nrows() != panel.p() {
        return Err(Error::DimensionMismatch {
            expected: panel.p(),
            actual: q.nrows(),
        });
    }
    if q.ncols() == 0 {
        return Ok(panel.clone());
    }
    let deviation = gram_deviation(q);
    if deviation > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal { deviation });
    }
    let coords = q.transpose() * &panel.values;
    let values = &panel.values - q * coords;
    Ok(TimeSeriesPanel {
        values,
        series_ids: panel.series_ids.clone(),
        labels: panel.labels.clone(),
    })
}
