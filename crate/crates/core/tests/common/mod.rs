//! Brute-force reference implementations and seeded check bundles shared by
//! the oracle, invariant and acceptance targets.
#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use factorclust::clustering::{
    cluster_pipeline, detect_no_cluster, kmeans, label_distribution, similarity_matrix,
    wcss_curve, KMeansConfig, PipelineConfig,
};
use factorclust::evaluation::misclassification_count;
use factorclust::factor_count::cumulative_ratio_sequence;
use factorclust::linalg::{gram_deviation, sym_eigenvalues_desc};
use factorclust::loadings::{
    estimate_strong_loadings, estimate_weak_loadings, oracle_weak_projection, projection,
};
use factorclust::panel::{lag_autocov, pooled_matrix, TimeSeriesPanel};
use factorclust::simulation::{run_monte_carlo, MonteCarloConfig, ScenarioSpec, Stages};
use factorclust::simulation::generate_scenario;

pub type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn random_panel(rng: &mut ChaCha8Rng, p: usize, n: usize) -> TimeSeriesPanel {
    TimeSeriesPanel::new(DMatrix::from_fn(p, n, |_, _| rng.gen_range(-2.0..2.0))).unwrap()
}

/// Double loop over `t` with the full-sample mean and divisor `n`.
pub fn lag_autocov_oracle(y: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (p, n) = y.shape();
    let mean: Vec<f64> = (0..p).map(|i| (0..n).map(|t| y[(i, t)]).sum::<f64>() / n as f64).collect();
    let mut out = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut s = 0.0;
            for t in 0..n - k {
                s += (y[(i, t + k)] - mean[i]) * (y[(j, t)] - mean[j]);
            }
            out[(i, j)] = s / n as f64;
        }
    }
    out
}

pub fn pooled_oracle(y: &DMatrix<f64>, k0: usize) -> DMatrix<f64> {
    let p = y.nrows();
    let mut out = DMatrix::zeros(p, p);
    for k in 0..=k0 {
        let s = lag_autocov_oracle(y, k);
        for i in 0..p {
            for j in 0..p {
                let mut v = 0.0;
                for l in 0..p {
                    v += s[(i, l)] * s[(j, l)];
                }
                out[(i, j)] += v;
            }
        }
    }
    out
}

/// Cyclic Jacobi rotations; eigenvalues in descending order.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut a = m.clone();
    let n = a.nrows();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 * a.norm_squared().max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut vals: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    vals.sort_by(|x, y| y.partial_cmp(x).unwrap());
    vals
}

pub fn similarity_oracle(f: &DMatrix<f64>) -> DMatrix<f64> {
    let m = f.nrows();
    DMatrix::from_fn(m, m, |l, k| {
        let mut dot = 0.0;
        let mut nl = 0.0;
        let mut nk = 0.0;
        for j in 0..f.ncols() {
            dot += f[(l, j)] * f[(k, j)];
            nl += f[(l, j)] * f[(l, j)];
            nk += f[(k, j)] * f[(k, j)];
        }
        dot.abs() / (nl.sqrt() * nk.sqrt())
    })
}

pub fn wcss_of(points: &DMatrix<f64>, labels: &[usize], d: usize) -> f64 {
    let q = points.ncols();
    let mut total = 0.0;
    for c in 0..d {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        for j in 0..q {
            let mean = members.iter().map(|&i| points[(i, j)]).sum::<f64>() / members.len() as f64;
            total += members.iter().map(|&i| (points[(i, j)] - mean).powi(2)).sum::<f64>();
        }
    }
    total
}

/// Minimum WCSS over every partition of the rows into exactly `d` non-empty groups.
pub fn exhaustive_min_wcss(points: &DMatrix<f64>, d: usize) -> f64 {
    fn go(i: usize, used: usize, d: usize, labels: &mut Vec<usize>, pts: &DMatrix<f64>, best: &mut f64) {
        let m = labels.len();
        if m - i < d - used {
            return;
        }
        if i == m {
            *best = best.min(wcss_of(pts, labels, d));
            return;
        }
        for c in 0..(used + 1).min(d) {
            labels[i] = c;
            go(i + 1, used.max(c + 1), d, labels, pts, best);
        }
    }
    let mut best = f64::INFINITY;
    let mut labels = vec![0; points.nrows()];
    go(0, 0, d, &mut labels, points, &mut best);
    best
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for perm in permutations(k - 1) {
        for pos in 0..=perm.len() {
            let mut next = perm.clone();
            next.insert(pos, k - 1);
            out.push(next);
        }
    }
    out
}

/// Minimum disagreements over all relabelings of `pred` within `0..k`.
pub fn tau_oracle(pred: &[usize], truth: &[usize]) -> usize {
    let k = pred.iter().chain(truth).max().map_or(0, |m| m + 1);
    permutations(k)
        .iter()
        .map(|perm| pred.iter().zip(truth).filter(|(a, b)| perm[**a] != **b).count())
        .min()
        .unwrap_or(0)
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * scale.max(1.0)
}

/// All brute-force comparisons for one seed.
pub fn oracle_checks(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let p = rng.gen_range(2..=6);
    let n = rng.gen_range(6..=20);
    let panel = random_panel(&mut rng, p, n);
    for k in 0..n {
        let fast = lag_autocov(&panel, k).map_err(|e| e.to_string())?.matrix;
        let slow = lag_autocov_oracle(panel.values(), k);
        ensure(max_abs_diff(&fast, &slow) <= 1e-9, || format!("lag {k} autocovariance differs"))?;
    }
    let k0 = rng.gen_range(0..n.min(6));
    let pooled = pooled_matrix(&panel, k0).map_err(|e| e.to_string())?.matrix;
    let slow = pooled_oracle(panel.values(), k0);
    let scale = slow.abs().max();
    ensure(max_abs_diff(&pooled, &slow) <= 1e-9 * scale.max(1.0), || "pooled matrix differs".into())?;
    let fast_eig = sym_eigenvalues_desc(&pooled).map_err(|e| e.to_string())?;
    let slow_eig = jacobi_eigenvalues(&slow);
    for (a, b) in fast_eig.iter().zip(&slow_eig) {
        ensure(close(*a, *b, scale), || format!("eigenvalue {a} vs {b}"))?;
    }

    let m = rng.gen_range(3..=12);
    let q = rng.gen_range(1..=4);
    let f = DMatrix::from_fn(m, q, |_, _| rng.gen_range(-1.0..1.0));
    let sim = similarity_matrix(&f).map_err(|e| e.to_string())?;
    ensure(max_abs_diff(&sim, &similarity_oracle(&f)) <= 1e-9, || "similarity differs".into())?;

    let d = rng.gen_range(1..=3.min(m));
    let cfg = KMeansConfig { seed, ..Default::default() };
    let fit = kmeans(&sim, d, &cfg).map_err(|e| e.to_string())?;
    let brute = exhaustive_min_wcss(&sim, d);
    ensure(close(fit.wcss, wcss_of(&sim, &fit.assignments, d), 1.0), || "reported WCSS inconsistent".into())?;
    ensure(close(fit.wcss, brute, 1.0), || format!("k-means WCSS {} vs exhaustive {brute} (m={m}, d={d})", fit.wcss))?;

    let dl = rng.gen_range(1..=4);
    let len = rng.gen_range(1..=15);
    let pred: Vec<usize> = (0..len).map(|_| rng.gen_range(0..dl)).collect();
    let truth: Vec<usize> = (0..len).map(|_| rng.gen_range(0..dl)).collect();
    let tau = misclassification_count(&pred, &truth).map_err(|e| e.to_string())?;
    ensure(tau == tau_oracle(&pred, &truth), || format!("tau {tau} vs oracle {}", tau_oracle(&pred, &truth)))?;

    labeled_panel_counts(seed)
}

pub fn tiny_spec(seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        n: 150,
        d: 3,
        p1: 6,
        p_extra: 6,
        r0: 1,
        r_per_cluster: 1,
        seed,
        ..ScenarioSpec::scenario_one(6)
    }
}

/// Label-by-cluster counts agree with direct counting and rows sum to one.
pub fn labeled_panel_counts(seed: u64) -> Check {
    let spec = tiny_spec(seed);
    let (panel, truth) = generate_scenario(&spec).map_err(|e| e.to_string())?;
    let labels: Vec<String> = truth
        .membership
        .iter()
        .map(|m| m.map_or("none".to_string(), |c| format!("sector{c}")))
        .collect();
    let cfg = PipelineConfig { counts: Some((1, 3)), ..Default::default() };
    let result = cluster_pipeline(&panel, &cfg).map_err(|e| e.to_string())?;
    let dist = label_distribution(&labels, &result).map_err(|e| e.to_string())?;
    let mut total = 0;
    for (row, label) in dist.labels.iter().enumerate() {
        let sum: f64 = dist.fractions[row].iter().sum();
        ensure((sum - 1.0).abs() < 1e-12, || format!("row {label} sums to {sum}"))?;
        for c in 0..result.d_used {
            let direct = result
                .retained_indices
                .iter()
                .zip(&result.assignments)
                .filter(|(i, a)| labels[**i] == *label && **a == c)
                .count();
            ensure(direct == dist.counts[row][c], || format!("count mismatch at {label}/{c}"))?;
        }
        total += dist.counts[row].iter().sum::<usize>();
    }
    ensure(total == result.retained_indices.len(), || "counts do not cover retained series".into())?;
    let sorted: Vec<String> = dist.labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    ensure(sorted == dist.labels, || "label rows are not sorted".into())
}

fn is_projection(p: &DMatrix<f64>, rank: usize) -> Check {
    ensure(max_abs_diff(p, &p.transpose()) < 1e-12, || "projection not symmetric".into())?;
    ensure(max_abs_diff(&(p * p), p) < 1e-9, || "projection not idempotent".into())?;
    ensure((p.trace() - rank as f64).abs() < 1e-9, || format!("trace {} vs rank {rank}", p.trace()))
}

/// Structural invariants of the whole procedure on one seeded synthetic panel.
pub fn invariant_checks(seed: u64) -> Check {
    let spec = tiny_spec(seed);
    let (panel, truth) = generate_scenario(&spec).map_err(|e| e.to_string())?;
    let err = |e: factorclust::Error| e.to_string();
    let k0 = 5;
    let p = panel.p();

    let a = estimate_strong_loadings(&panel, k0, 1).map_err(err)?;
    let b = estimate_weak_loadings(&panel, &a, k0, 3).map_err(err)?;
    ensure(gram_deviation(a.matrix()) < 1e-10, || "strong loadings not orthonormal".into())?;
    ensure(gram_deviation(b.matrix()) < 1e-10, || "weak loadings not orthonormal".into())?;
    ensure((a.matrix().transpose() * b.matrix()).abs().max() < 1e-8, || "weak loadings not orthogonal to strong".into())?;
    is_projection(&projection(&a), 1)?;
    is_projection(&projection(&b), 3)?;
    let target = oracle_weak_projection(&truth.a_true, &truth.b_padded).map_err(err)?;
    is_projection(&target, 3)?;

    // detection is monotone in the threshold
    let norms = b.row_norms();
    let mut omegas: Vec<f64> = norms.clone();
    omegas.extend([0.0, 0.05, 0.1, 0.2, 1.0]);
    omegas.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut prev: BTreeSet<usize> = BTreeSet::new();
    for w in omegas {
        let cur: BTreeSet<usize> = detect_no_cluster(&b, w).into_iter().collect();
        ensure(prev.is_subset(&cur), || format!("detection not monotone at omega={w}"))?;
        prev = cur;
    }

    // WCSS non-increasing in d and along Lloyd iterations
    let sim = similarity_matrix(b.matrix()).map_err(err)?;
    let cfg = KMeansConfig { seed, ..Default::default() };
    let curve = wcss_curve(&sim, 6, &cfg).map_err(err)?;
    for w in curve.windows(2) {
        ensure(w[1].wcss <= w[0].wcss + 1e-12, || "WCSS curve increases".into())?;
    }
    for sol in &curve {
        for t in sol.wcss_trace.windows(2) {
            ensure(t[1] <= t[0] + 1e-12, || "Lloyd trace increases".into())?;
        }
    }

    // permutation equivariance of ratios, detection and similarity
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..p).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let permuted = panel.permuted(&order).map_err(err)?;
    let r1 = cumulative_ratio_sequence(&panel, k0, 8).map_err(err)?;
    let r2 = cumulative_ratio_sequence(&permuted, k0, 8).map_err(err)?;
    for (x, y) in r1.ratios.iter().zip(&r2.ratios) {
        let (x, y) = (x.value(), y.value());
        match (x, y) {
            (Some(x), Some(y)) => ensure((x - y).abs() <= 1e-7 * x.abs().max(1.0), || format!("ratio {x} vs {y} after permutation"))?,
            (None, None) => {}
            _ => return Err("ratio kind changed after permutation".into()),
        }
    }
    let a2 = estimate_strong_loadings(&permuted, k0, 1).map_err(err)?;
    let b2 = estimate_weak_loadings(&permuted, &a2, k0, 3).map_err(err)?;
    let norms2 = b2.row_norms();
    for (i, &src) in order.iter().enumerate() {
        ensure((norms2[i] - norms[src]).abs() < 1e-7, || format!("row norm of series {src} changed after permutation"))?;
    }
    let base = tiny_spec(seed);
    let cfg = PipelineConfig { counts: Some((1, 3)), ..Default::default() };
    let c1 = cluster_pipeline(&panel, &cfg).map_err(err)?;
    let c2 = cluster_pipeline(&permuted, &cfg).map_err(err)?;
    let mapped: Vec<usize> = c2.no_cluster_indices.iter().map(|&i| order[i]).collect::<BTreeSet<_>>().into_iter().collect();
    ensure(mapped == c1.no_cluster_indices, || "no-cluster set not equivariant".into())?;
    ensure(c1.d_hat == c2.d_hat, || "cluster bound changed after permutation".into())?;

    // replication results do not depend on the thread count
    let small = ScenarioSpec { n: 80, ..base };
    let mc = MonteCarloConfig { reps: 3, master_seed: seed, stages: Stages::Full, ..Default::default() };
    let one = run_monte_carlo(&small, &MonteCarloConfig { jobs: 1, ..mc.clone() }).map_err(err)?;
    let four = run_monte_carlo(&small, &MonteCarloConfig { jobs: 4, ..mc }).map_err(err)?;
    ensure(one.replications == four.replications && one.failures == four.failures, || "results depend on thread count".into())
}
