//! Lloyd K-means with farthest-point seeding, single-point transfer refinement,
//! restarts and a WCSS curve.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ELBOW_THETA: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iter: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Zero-based cluster per point; every cluster in `0..d` is non-empty.
    pub assignments: Vec<usize>,
    /// d × q, one center per row.
    pub centers: DMatrix<f64>,
    pub wcss: f64,
    pub iterations: usize,
    /// WCSS after every assignment step, ending with the final value.
    pub wcss_trace: Vec<f64>,
}

/// Row-major copy of the points for cache-friendly distance loops.
struct Points {
    data: Vec<f64>,
    m: usize,
    q: usize,
}

impl Points {
    fn new(points: &DMatrix<f64>) -> Self {
        let (m, q) = points.shape();
        let mut data = Vec::with_capacity(m * q);
        for i in 0..m {
            data.extend(points.row(i).iter());
        }
        Self { data, m, q }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.q..(i + 1) * self.q]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct Lloyd<'a> {
    pts: &'a Points,
    d: usize,
    centers: Vec<f64>,
    assign: Vec<usize>,
}

impl<'a> Lloyd<'a> {
    fn center(&self, c: usize) -> &[f64] {
        &self.centers[c * self.pts.q..(c + 1) * self.pts.q]
    }

    fn nearest(&self, i: usize) -> (usize, f64) {
        let row = self.pts.row(i);
        let mut best = (0, f64::INFINITY);
        for c in 0..self.d {
            let dist = sq_dist(row, self.center(c));
            if dist < best.1 {
                best = (c, dist);
            }
        }
        best
    }

    /// Returns (changed, wcss).
    fn assign_step(&mut self) -> (bool, f64) {
        let mut changed = false;
        let mut wcss = 0.0;
        for i in 0..self.pts.m {
            let (c, dist) = self.nearest(i);
            if self.assign[i] != c {
                self.assign[i] = c;
                changed = true;
            }
            wcss += dist;
        }
        (changed, wcss)
    }

    fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.d];
        for &a in &self.assign {
            sizes[a] += 1;
        }
        sizes
    }

    fn update_means(&mut self) {
        let q = self.pts.q;
        let sizes = self.sizes();
        let mut sums = vec![0.0; self.d * q];
        for i in 0..self.pts.m {
            let c = self.assign[i];
            for (s, v) in sums[c * q..(c + 1) * q].iter_mut().zip(self.pts.row(i)) {
                *s += v;
            }
        }
        for c in 0..self.d {
            if sizes[c] > 0 {
                let inv = 1.0 / sizes[c] as f64;
                for j in 0..q {
                    self.centers[c * q + j] = sums[c * q + j] * inv;
                }
            }
        }
    }

    /// Point farthest from its own center among clusters with at least two
    /// members; ties to the lowest index.
    fn farthest_donor(&self, sizes: &[usize]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.pts.m {
            let a = self.assign[i];
            if sizes[a] < 2 {
                continue;
            }
            let dist = sq_dist(self.pts.row(i), self.center(a));
            if best.map_or(true, |(_, b)| dist > b) {
                best = Some((i, dist));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Move the farthest point into each empty cluster and center it there.
    fn repair_empty(&mut self) {
        let q = self.pts.q;
        loop {
            let sizes = self.sizes();
            let Some(empty) = sizes.iter().position(|&s| s == 0) else { break };
            let Some(i) = self.farthest_donor(&sizes) else { break };
            self.assign[i] = empty;
            let row = self.pts.row(i).to_vec();
            self.centers[empty * q..(empty + 1) * q].copy_from_slice(&row);
        }
    }

    fn wcss(&self) -> f64 {
        (0..self.pts.m)
            .map(|i| sq_dist(self.pts.row(i), self.center(self.assign[i])))
            .sum()
    }

    /// One sweep of single-point moves that lower the WCSS exactly
    /// (centers must be the cluster means). Returns whether anything moved.
    fn transfer_pass(&mut self) -> bool {
        let q = self.pts.q;
        let mut sizes = self.sizes();
        let mut moved = false;
        for i in 0..self.pts.m {
            let a = self.assign[i];
            if sizes[a] < 2 {
                continue;
            }
            let row = self.pts.row(i);
            let na = sizes[a] as f64;
            let removal = na / (na - 1.0) * sq_dist(row, self.center(a));
            let mut best: Option<(usize, f64)> = None;
            for b in (0..self.d).filter(|&b| b != a) {
                let nb = sizes[b] as f64;
                let gain = removal - nb / (nb + 1.0) * sq_dist(row, self.center(b));
                // relative slack keeps rounding from cycling a point back and forth
                if gain > 1e-12 * removal.max(f64::MIN_POSITIVE) && best.map_or(true, |(_, g)| gain > g) {
                    best = Some((b, gain));
                }
            }
            if let Some((b, _)) = best {
                let nb = sizes[b] as f64;
                for j in 0..q {
                    let x = row[j];
                    let ca = self.centers[a * q + j];
                    let cb = self.centers[b * q + j];
                    self.centers[a * q + j] = (na * ca - x) / (na - 1.0);
                    self.centers[b * q + j] = (nb * cb + x) / (nb + 1.0);
                }
                sizes[a] -= 1;
                sizes[b] += 1;
                self.assign[i] = b;
                moved = true;
            }
        }
        moved
    }

    fn run(mut self, max_iter: usize) -> KMeansResult {
        let mut trace = Vec::new();
        let mut iterations = 0;
        // assignments start out invalid so the first pass always counts as a change
        self.assign.iter_mut().for_each(|a| *a = usize::MAX);
        while iterations < max_iter {
            iterations += 1;
            let (changed, wcss) = self.assign_step();
            trace.push(wcss);
            if !changed {
                break;
            }
            self.update_means();
            self.repair_empty();
        }
        if self.assign.iter().any(|&a| a == usize::MAX) {
            self.assign_step();
        }
        self.repair_empty();
        self.update_means();
        // Lloyd stops at any fixed point; single transfers escape the shallow ones
        let mut passes = 0;
        while passes < max_iter && self.transfer_pass() {
            passes += 1;
            self.update_means();
            trace.push(self.wcss());
        }
        let wcss = self.wcss();
        trace.push(wcss);
        KMeansResult {
            assignments: self.assign,
            centers: DMatrix::from_row_slice(self.d, self.pts.q, &self.centers),
            wcss,
            iterations,
            wcss_trace: trace,
        }
    }
}

fn farthest_point_seeds(pts: &Points, d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let first = rng.gen_range(0..pts.m);
    let mut chosen = vec![first];
    let mut min_dist: Vec<f64> = (0..pts.m)
        .map(|i| sq_dist(pts.row(i), pts.row(first)))
        .collect();
    while chosen.len() < d {
        let mut next = 0;
        for i in 1..pts.m {
            if min_dist[i] > min_dist[next] {
                next = i;
            }
        }
        chosen.push(next);
        for i in 0..pts.m {
            min_dist[i] = min_dist[i].min(sq_dist(pts.row(i), pts.row(next)));
        }
    }
    chosen.iter().flat_map(|&i| pts.row(i).to_vec()).collect()
}

fn check(points: &DMatrix<f64>, d: usize) -> Result<()> {
    let m = points.nrows();
    if d == 0 || d > m {
        return Err(Error::InvalidParameter(format!(
            "k-means needs 1 <= d <= m, got d={d}, m={m}"
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("k-means input has non-finite values".into()));
    }
    Ok(())
}

/// Lloyd iterations from explicit starting centers (d × q).
pub fn lloyd_from_centers(
    points: &DMatrix<f64>,
    centers: &DMatrix<f64>,
    max_iter: usize,
) -> Result<KMeansResult> {
    let d = centers.nrows();
    check(points, d)?;
    if centers.ncols() != points.ncols() {
        return Err(Error::DimensionMismatch {
            expected: points.ncols(),
            actual: centers.ncols(),
        });
    }
    let pts = Points::new(points);
    let flat = Points::new(centers).data;
    Ok(Lloyd {
        pts: &pts,
        d,
        centers: flat,
        assign: vec![0; pts.m],
    }
    .run(max_iter.max(1)))
}

/// Best of `restarts` seeded runs (minimal WCSS, ties to the lowest restart).
pub fn kmeans(points: &DMatrix<f64>, d: usize, config: &KMeansConfig) -> Result<KMeansResult> {
    check(points, d)?;
    let pts = Points::new(points);
    let restarts = config.restarts.max(1);
    let runs: Vec<KMeansResult> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            let centers = farthest_point_seeds(&pts, d, &mut rng);
            Lloyd {
                pts: &pts,
                d,
                centers,
                assign: vec![0; pts.m],
            }
            .run(config.max_iter.max(1))
        })
        .collect();
    Ok(best_of(runs))
}

fn best_of(runs: Vec<KMeansResult>) -> KMeansResult {
    let mut best: Option<KMeansResult> = None;
    for r in runs {
        if best.as_ref().map_or(true, |b| r.wcss < b.wcss) {
            best = Some(r);
        }
    }
    best.expect("at least one run")
}

/// Best solutions for `d = 1..=d_max`.
///
/// Each `d > 1` also tries the previous solution's centers plus the point
/// farthest from its center, so the reported WCSS is non-increasing in `d`.
pub fn wcss_curve(
    points: &DMatrix<f64>,
    d_max: usize,
    config: &KMeansConfig,
) -> Result<Vec<KMeansResult>> {
    check(points, d_max)?;
    let mut out: Vec<KMeansResult> = Vec::with_capacity(d_max);
    for d in 1..=d_max {
        let cfg = KMeansConfig {
            seed: config.seed.wrapping_add(d as u64),
            ..*config
        };
        let mut best = kmeans(points, d, &cfg)?;
        if let Some(prev) = out.last() {
            let far = (0..points.nrows())
                .map(|i| {
                    let c = prev.assignments[i];
                    let dist = (points.row(i) - prev.centers.row(c)).norm_squared();
                    (i, dist)
                })
                .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
                .0;
            let mut centers = prev.centers.clone().insert_row(d - 1, 0.0);
            centers.set_row(d - 1, &points.row(far));
            let warm = lloyd_from_centers(points, &centers, config.max_iter)?;
            if warm.wcss < best.wcss {
                best = warm;
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// Smallest `d` whose relative drop `(W(d) − W(d+1)) / W(d)` is below `theta`;
/// `curve[i]` holds `W(i + 1)`. Falls back to the last `d`.
pub fn elbow_select(curve: &[f64], theta: f64) -> usize {
    let d_max = curve.len();
    for d in 1..d_max {
        let (w, next) = (curve[d - 1], curve[d]);
        let drop = if w > 0.0 { (w - next) / w } else { 0.0 };
        if drop < theta {
            return d;
        }
    }
    d_max.max(1)
}
