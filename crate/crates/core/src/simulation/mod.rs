//! Synthetic panels with known cluster structure and the replication driver.

mod example1;
mod monte_carlo;

pub use example1::{example1_population_eigenvalues, generate_example1, Example1, Example1Params};
pub use monte_carlo::{
    run_monte_carlo, run_replication, CountMode, MonteCarloConfig, MonteCarloSummary,
    ReplicationFailure, Stages,
};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;

/// Parameters of a synthetic panel
/// `y_t = A x_t + (Bᵀ, 0ᵀ)ᵀ z_t + ε_t` with block-diagonal `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub d: usize,
    /// Series per cluster.
    pub p1: usize,
    /// Series outside every cluster.
    pub p_extra: usize,
    pub r0: usize,
    /// Weak factors per cluster.
    pub r_per_cluster: usize,
    /// AR/MA coefficients are drawn from `U{(−hi, −lo) ∪ (lo, hi)}`.
    pub coef_low: f64,
    pub coef_high: f64,
    /// Marginal standard deviations of factor components are `U(lo, hi)`.
    pub factor_sd_low: f64,
    pub factor_sd_high: f64,
    /// Innovation variance of the MA(1) idiosyncratic noise.
    pub noise_variance: f64,
    /// Loading entries are `U(−bound, bound)`.
    pub loading_bound: f64,
    pub shuffle: bool,
    pub seed: u64,
}

impl ScenarioSpec {
    fn base(n: usize, d: usize, p1: usize, p_extra: usize) -> Self {
        Self {
            n,
            d,
            p1,
            p_extra,
            r0: 2,
            r_per_cluster: 2,
            coef_low: 0.4,
            coef_high: 0.95,
            factor_sd_low: 1.0,
            factor_sd_high: 2.0,
            noise_variance: 0.25,
            loading_bound: 1.0,
            shuffle: true,
            seed: 0,
        }
    }

    /// n = 400, d = 5, one extra block of `p1` unclustered series.
    pub fn scenario_one(p1: usize) -> Self {
        Self::base(400, 5, p1, p1)
    }

    /// n = 800, d = 10, `5·p1` unclustered series.
    pub fn scenario_two(p1: usize) -> Self {
        Self::base(800, 10, p1, 5 * p1)
    }

    pub fn p(&self) -> usize {
        self.d * self.p1 + self.p_extra
    }

    pub fn r(&self) -> usize {
        self.d * self.r_per_cluster
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.d == 0 || self.p1 == 0 || self.r0 == 0 || self.r_per_cluster == 0 {
            return bad("d, p1, r0 and r_per_cluster must be positive".into());
        }
        if self.n < 3 {
            return bad(format!("n={} too small", self.n));
        }
        if self.r_per_cluster > self.p1 {
            return bad("r_per_cluster cannot exceed p1".into());
        }
        if self.r0 + self.r() >= self.p() {
            return bad("r0 + r must be below p".into());
        }
        if !(0.0 <= self.coef_low && self.coef_low < self.coef_high && self.coef_high < 1.0) {
            return bad("coefficient range must satisfy 0 <= low < high < 1".into());
        }
        if !(0.0 < self.factor_sd_low && self.factor_sd_low <= self.factor_sd_high) {
            return bad("factor sd range must be positive and ordered".into());
        }
        if !(self.noise_variance >= 0.0 && self.loading_bound > 0.0) {
            return bad("noise variance must be >= 0 and loading bound > 0".into());
        }
        Ok(())
    }

    /// Parse flat `key = value` text. `scenario = I|II` selects a preset
    /// (honouring a `p1` given anywhere in the file); later keys override it.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: idx + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            pairs.push((idx + 1, k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
        let num = |line: usize, v: &str| -> Result<usize> {
            v.parse().map_err(|_| Error::Config {
                line,
                message: format!("expected a non-negative integer, got {v:?}"),
            })
        };
        let real = |line: usize, v: &str| -> Result<f64> {
            v.parse().map_err(|_| Error::Config {
                line,
                message: format!("expected a number, got {v:?}"),
            })
        };
        let p1 = match pairs.iter().find(|(_, k, _)| k == "p1") {
            Some((line, _, v)) => num(*line, v)?,
            None => 25,
        };
        let mut spec = Self::scenario_one(p1);
        for (line, key, value) in &pairs {
            let line = *line;
            match key.as_str() {
                "scenario" => {
                    spec = match value.to_ascii_uppercase().as_str() {
                        "I" | "1" => Self::scenario_one(p1),
                        "II" | "2" => Self::scenario_two(p1),
                        other => {
                            return Err(Error::Config {
                                line,
                                message: format!("unknown scenario {other:?}"),
                            })
                        }
                    }
                }
                "n" => spec.n = num(line, value)?,
                "d" => spec.d = num(line, value)?,
                "p1" => spec.p1 = num(line, value)?,
                "p_extra" => spec.p_extra = num(line, value)?,
                "r0" => spec.r0 = num(line, value)?,
                "r_per_cluster" => spec.r_per_cluster = num(line, value)?,
                "coef_low" => spec.coef_low = real(line, value)?,
                "coef_high" => spec.coef_high = real(line, value)?,
                "factor_sd_low" => spec.factor_sd_low = real(line, value)?,
                "factor_sd_high" => spec.factor_sd_high = real(line, value)?,
                "noise_variance" => spec.noise_variance = real(line, value)?,
                "loading_bound" => spec.loading_bound = real(line, value)?,
                "shuffle" => {
                    spec.shuffle = value.parse().map_err(|_| Error::Config {
                        line,
                        message: format!("expected true or false, got {value:?}"),
                    })?
                }
                "seed" => {
                    spec.seed = value.parse().map_err(|_| Error::Config {
                        line,
                        message: format!("expected an unsigned integer seed, got {value:?}"),
                    })?
                }
                other => {
                    return Err(Error::Config {
                        line,
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// `key = value` rendering accepted by [`ScenarioSpec::from_kv_str`].
    pub fn to_kv_string(&self) -> String {
        format!(
            "n = {}\nd = {}\np1 = {}\np_extra = {}\nr0 = {}\nr_per_cluster = {}\n\
             coef_low = {}\ncoef_high = {}\nfactor_sd_low = {}\nfactor_sd_high = {}\n\
             noise_variance = {}\nloading_bound = {}\nshuffle = {}\nseed = {}\n",
            self.n,
            self.d,
            self.p1,
            self.p_extra,
            self.r0,
            self.r_per_cluster,
            self.coef_low,
            self.coef_high,
            self.factor_sd_low,
            self.factor_sd_high,
            self.noise_variance,
            self.loading_bound,
            self.shuffle,
            self.seed
        )
    }
}

/// Everything that was drawn to build a synthetic panel.
/// Row order of every matrix matches the observed (possibly shuffled) panel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTruth {
    /// p × r0 common loadings, not orthonormalized.
    pub a_true: DMatrix<f64>,
    /// p × r block-diagonal cluster loadings padded with zero rows.
    pub b_padded: DMatrix<f64>,
    /// Zero-based cluster per series, `None` outside every cluster.
    pub membership: Vec<Option<usize>>,
    /// Series outside every cluster, ascending.
    pub j_true: Vec<usize>,
    /// Observed row `i` is generated row `permutation[i]`.
    pub permutation: Vec<usize>,
    pub ar_coefs: Vec<f64>,
    pub ma_coefs: Vec<f64>,
    pub noise_coefs: Vec<f64>,
    /// r0 × n common factors.
    pub common_factors: DMatrix<f64>,
    /// r × n cluster-specific factors.
    pub cluster_factors: DMatrix<f64>,
    /// p × n idiosyncratic noise, rows in observed order.
    pub noise: DMatrix<f64>,
    /// Strong and weak counts the generator intended.
    pub intended_counts: (usize, usize),
    /// Counts implied by loading strengths after any demotion.
    pub effective_counts: (usize, usize),
    /// Mean squared norm of the weak loading columns.
    pub weak_column_sq_norm: f64,
}

fn draw_coef(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let mag = rng.gen_range(lo..hi);
    if rng.gen_bool(0.5) {
        mag
    } else {
        -mag
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// AR(1) path with marginal sd `sd`, started from the stationary law.
fn ar1_path(rng: &mut ChaCha8Rng, phi: f64, sd: f64, n: usize) -> Vec<f64> {
    let innov = sd * (1.0 - phi * phi).sqrt();
    let mut out = Vec::with_capacity(n);
    let mut x = sd * normal(rng);
    out.push(x);
    for _ in 1..n {
        x = phi * x + innov * normal(rng);
        out.push(x);
    }
    out
}

/// MA(1) path `e_t + θ e_{t−1}` with innovation sd `innov`.
fn ma1_path(rng: &mut ChaCha8Rng, theta: f64, innov: f64, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..=n).map(|_| innov * normal(rng)).collect();
    (1..=n).map(|t| e[t] + theta * e[t - 1]).collect()
}

pub(crate) fn generate_with_rng(
    spec: &ScenarioSpec,
    demoted: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(TimeSeriesPanel, ScenarioTruth)> {
    spec.validate()?;
    if demoted > spec.r0 {
        return Err(Error::InvalidParameter(format!(
            "cannot demote {demoted} of {} common factors",
            spec.r0
        )));
    }
    let (n, p, r0, r) = (spec.n, spec.p(), spec.r0, spec.r());
    let (rj, p1) = (spec.r_per_cluster, spec.p1);
    let bound = spec.loading_bound;

    let mut a = DMatrix::from_fn(p, r0, |_, _| 0.0);
    for i in 0..p {
        for j in 0..r0 {
            a[(i, j)] = rng.gen_range(-bound..bound);
        }
    }
    let mut b = DMatrix::zeros(p, r);
    for c in 0..spec.d {
        for i in 0..p1 {
            for j in 0..rj {
                b[(c * p1 + i, c * rj + j)] = rng.gen_range(-bound..bound);
            }
        }
    }
    let (lo, hi) = (spec.coef_low, spec.coef_high);
    let (slo, shi) = (spec.factor_sd_low, spec.factor_sd_high);
    let ar_coefs: Vec<f64> = (0..r0).map(|_| draw_coef(rng, lo, hi)).collect();
    let x_sd: Vec<f64> = (0..r0).map(|_| rng.gen_range(slo..=shi)).collect();
    let ma_coefs: Vec<f64> = (0..r).map(|_| draw_coef(rng, lo, hi)).collect();
    let z_sd: Vec<f64> = (0..r).map(|_| rng.gen_range(slo..=shi)).collect();
    let noise_coefs: Vec<f64> = (0..p).map(|_| draw_coef(rng, lo, hi)).collect();

    let mut x = DMatrix::zeros(r0, n);
    for j in 0..r0 {
        let path = ar1_path(rng, ar_coefs[j], x_sd[j], n);
        x.set_row(j, &nalgebra::RowDVector::from_vec(path));
    }
    let mut z = DMatrix::zeros(r, n);
    for j in 0..r {
        let theta = ma_coefs[j];
        let path = ma1_path(rng, theta, z_sd[j] / (1.0 + theta * theta).sqrt(), n);
        z.set_row(j, &nalgebra::RowDVector::from_vec(path));
    }
    let noise_sd = spec.noise_variance.sqrt();
    let mut eps = DMatrix::zeros(p, n);
    for i in 0..p {
        let path = ma1_path(rng, noise_coefs[i], noise_sd, n);
        eps.set_row(i, &nalgebra::RowDVector::from_vec(path));
    }

    let weak_column_sq_norm =
        b.column_iter().map(|c| c.norm_squared()).sum::<f64>() / r as f64;
    for j in r0 - demoted..r0 {
        let norm_sq = a.column(j).norm_squared();
        if norm_sq > 0.0 {
            let scale = (weak_column_sq_norm / norm_sq).sqrt();
            a.column_mut(j).scale_mut(scale);
        }
    }

    let y = &a * &x + &b * &z + &eps;

    let mut permutation: Vec<usize> = (0..p).collect();
    if spec.shuffle {
        permutation.shuffle(rng);
    }
    let reorder = |m: &DMatrix<f64>| DMatrix::from_fn(p, m.ncols(), |i, j| m[(permutation[i], j)]);
    let membership_raw: Vec<Option<usize>> = (0..p)
        .map(|i| if i < spec.d * p1 { Some(i / p1) } else { None })
        .collect();
    let membership: Vec<Option<usize>> = permutation.iter().map(|&i| membership_raw[i]).collect();
    let j_true = (0..p).filter(|&i| membership[i].is_none()).collect();
    let panel = TimeSeriesPanel::new(reorder(&y))?;
    let truth = ScenarioTruth {
        a_true: reorder(&a),
        b_padded: reorder(&b),
        membership,
        j_true,
        permutation: permutation.clone(),
        ar_coefs,
        ma_coefs,
        noise_coefs: permutation.iter().map(|&i| noise_coefs[i]).collect(),
        common_factors: x,
        cluster_factors: z,
        noise: reorder(&eps),
        intended_counts: (r0, r),
        effective_counts: (r0 - demoted, r + demoted),
        weak_column_sq_norm,
    };
    Ok((panel, truth))
}

/// Draw a panel and its truth from `spec.seed`.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<(TimeSeriesPanel, ScenarioTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    generate_with_rng(spec, 0, &mut rng)
}

/// As [`generate_scenario`], with the last `demoted` common loading columns
/// rescaled to the mean squared norm of the weak loading columns.
pub fn generate_robustness(
    spec: &ScenarioSpec,
    demoted: usize,
) -> Result<(TimeSeriesPanel, ScenarioTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    generate_with_rng(spec, demoted, &mut rng)
}
