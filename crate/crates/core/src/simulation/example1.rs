//! Three-factor construction where one strong factor shares an MA component
//! with a weak factor, so a single lag cannot separate the strengths.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::normal;
use crate::error::{Error, Result};
use crate::linalg::{sym_eigenvalues_desc, symmetrize};
use crate::panel::TimeSeriesPanel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example1Params {
    pub p: usize,
    pub n: usize,
    /// Strength exponent of the weak factors, in (0, 1).
    pub delta: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub seed: u64,
}

impl Default for Example1Params {
    fn default() -> Self {
        Self {
            p: 100,
            n: 400,
            delta: 0.5,
            a1: 0.8,
            a2: -0.5,
            a3: 0.6,
            seed: 0,
        }
    }
}

impl Example1Params {
    fn validate(&self) -> Result<()> {
        if self.p < 8 {
            return Err(Error::InvalidParameter(format!("p must be at least 8, got {}", self.p)));
        }
        if self.n < 3 {
            return Err(Error::InvalidParameter(format!("n must be at least 3, got {}", self.n)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if ![self.a1, self.a2, self.a3].iter().all(|a| a.is_finite()) {
            return Err(Error::InvalidParameter("MA coefficients must be finite".into()));
        }
        Ok(())
    }

    /// `(a1 − a2)²(1 − a1 a2) = 0` collapses the strong/weak separation.
    pub fn is_degenerate(&self) -> bool {
        let (a1, a2) = (self.a1, self.a2);
        ((a1 - a2).powi(2) * (1.0 - a1 * a2)).abs() < 1e-12
    }

    /// Lag-`k` autocovariance of the factor vector `(x, z1, z2)`, `k ∈ {0, 1}`.
    pub fn factor_autocov(&self, k: usize) -> DMatrix<f64> {
        let g = |a: f64| match k {
            0 => 1.0 + a * a,
            1 => a,
            _ => 0.0,
        };
        let pf = self.p as f64;
        let strong = pf;
        let weak = pf.powf(1.0 - self.delta);
        let cross = pf.powf(1.0 - self.delta / 2.0);
        DMatrix::from_row_slice(
            3,
            3,
            &[
                strong * (g(self.a1) + g(self.a2)),
                cross * g(self.a2),
                0.0,
                cross * g(self.a2),
                weak * g(self.a2),
                0.0,
                0.0,
                0.0,
                weak * g(self.a3),
            ],
        )
    }

    /// Orthonormal loadings `[a, b1, b2]`: `a` is flat, `b1` and `b2` alternate
    /// in sign over two disjoint blocks of equal even size.
    pub fn loadings(&self) -> DMatrix<f64> {
        let p = self.p;
        let m = (p / 4) & !1;
        let mut u = DMatrix::zeros(p, 3);
        let flat = 1.0 / (p as f64).sqrt();
        let alt = 1.0 / (m as f64).sqrt();
        for i in 0..p {
            u[(i, 0)] = flat;
        }
        for i in 0..m {
            let s = if i % 2 == 0 { alt } else { -alt };
            u[(i, 1)] = s;
            u[(m + i, 2)] = s;
        }
        u
    }
}

#[derive(Debug, Clone)]
pub struct Example1 {
    pub params: Example1Params,
    pub panel: TimeSeriesPanel,
    /// p × 3 orthonormal loadings.
    pub loadings: DMatrix<f64>,
    /// Population `Σ_y(0)` and `Σ_y(1)`.
    pub sigma0: DMatrix<f64>,
    pub sigma1: DMatrix<f64>,
    pub degenerate: bool,
}

pub fn generate_example1(params: &Example1Params) -> Result<Example1> {
    params.validate()?;
    let degenerate = params.is_degenerate();
    if degenerate {
        log::warn!(
            "a1={} a2={} make the strong and weak factors inseparable",
            params.a1,
            params.a2
        );
    }
    let (p, n) = (params.p, params.n);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let u: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..=n).map(|_| normal(&mut rng)).collect())
        .collect();
    let ma = |i: usize, a: f64, t: usize| u[i][t + 1] + a * u[i][t];
    let pf = p as f64;
    let s_strong = pf.sqrt();
    let s_weak = pf.powf((1.0 - params.delta) / 2.0);
    let mut factors = DMatrix::zeros(3, n);
    for t in 0..n {
        let v2 = ma(1, params.a2, t);
        factors[(0, t)] = s_strong * (ma(0, params.a1, t) + v2);
        factors[(1, t)] = s_weak * v2;
        factors[(2, t)] = s_weak * ma(2, params.a3, t);
    }
    let loadings = params.loadings();
    let panel = TimeSeriesPanel::new(&loadings * &factors)?;
    let sigma0 = &loadings * params.factor_autocov(0) * loadings.transpose();
    let sigma1 = &loadings * params.factor_autocov(1) * loadings.transpose();
    Ok(Example1 {
        params: *params,
        panel,
        loadings,
        sigma0,
        sigma1,
        degenerate,
    })
}

/// Nonzero eigenvalues of `Σ_y(0)Σ_y(0)ᵀ + Σ_y(1)Σ_y(1)ᵀ`, descending,
/// computed from the 3 × 3 factor autocovariances.
pub fn example1_population_eigenvalues(params: &Example1Params) -> Result<DVector<f64>> {
    params.validate()?;
    let g0 = params.factor_autocov(0);
    let g1 = params.factor_autocov(1);
    let m = symmetrize(&(&g0 * g0.transpose() + &g1 * g1.transpose()));
    Ok(DVector::from_vec(sym_eigenvalues_desc(&m)?))
}
