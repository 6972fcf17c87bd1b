//! Stratification builders.
//!
//! The central objective is a kernel k-means variant in which every
//! cluster's scatter is weighted by the cluster size,
//!
//! ```text
//! cost(S) = Σ_h |S_h| Σ_{z ∈ S_h} ‖φ(z) - μ_{φ,h}‖²,
//! ```
//!
//! which penalises large clusters and pushes the partition towards
//! balanced sizes. It is minimised by alternating a kernel-trick distance
//! update with a randomised greedy assignment: rows are visited in a
//! random order and each picks `argmin_j D_ij (n_j + 1)` against interim
//! cluster sizes. Many independent trials are run and the cheapest kept.
//! A brute-force enumerator over all assignments acts as an exact oracle
//! on tiny instances.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{centroid_sq_distance, EmbeddingSet, GramMatrix};
use crate::seed;

/// A partition of `n` points into `k` strata.
///
/// Construction through [`Stratification::new`] checks label range and
/// size bookkeeping only. The clustering builders in this module
/// additionally guarantee every stratum non-empty (repairing if needed);
/// [`brute_force_assign`] is the one producer that may return empty
/// strata, because the assignment program it solves exactly does not
/// forbid them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stratification {
    labels: Vec<usize>,
    sizes: Vec<usize>,
    k: usize,
}

impl Stratification {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("stratum count must be >= 1".into()));
        }
        if labels.is_empty() {
            return Err(Error::InvalidArgument("stratification of zero points".into()));
        }
        let mut sizes = vec![0usize; k];
        for &l in &labels {
            if l >= k {
                return Err(Error::InvalidArgument(format!("label {l} out of range for k={k}")));
            }
            sizes[l] += 1;
        }
        Ok(Self { labels, sizes, k })
    }

    /// Every point in its own stratum (`k = n`).
    pub fn singletons(n: usize) -> Result<Self> {
        Self::new((0..n).collect(), n)
    }

    /// One stratum holding all points (`k = 1`).
    pub fn single(n: usize) -> Result<Self> {
        Self::new(vec![0; n], 1)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn has_empty_strata(&self) -> bool {
        self.sizes.iter().any(|&s| s == 0)
    }

    /// Member indices per stratum.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m: Vec<Vec<usize>> = self.sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            m[l].push(i);
        }
        m
    }

    /// Sampling weights `|S_h| / n`.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.labels.len() as f64;
        self.sizes.iter().map(|&s| s as f64 / n).collect()
    }

    /// Writes the partition as `point_id,label` CSV rows (labels are
    /// 0-based stratum indices).
    pub fn write_csv<W: Write>(&self, mut w: W, ids: &[usize]) -> std::io::Result<()> {
        writeln!(w, "point_id,label")?;
        for (i, &l) in self.labels.iter().enumerate() {
            writeln!(w, "{},{}", ids.get(i).copied().unwrap_or(i), l)?;
        }
        Ok(())
    }
}

/// `n x k` matrix of squared feature-space distances to centroids.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    values: Vec<f64>, // row-major, n * k
    n: usize,
    k: usize,
}

impl DistanceMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidArgument("distance matrix must be non-empty".into()));
        }
        let k = rows[0].len();
        let mut values = Vec::with_capacity(rows.len() * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch { expected: k, got: row.len() });
            }
            for &v in row {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "distance entry at row {i} must be finite and >= 0, got {v}"
                    )));
                }
                values.push(v);
            }
        }
        let n = rows.len();
        Ok(Self { values, n, k })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }
}

/// Knobs for the randomised greedy assignment.
#[derive(Debug, Clone)]
pub struct GreedyConfig {
    /// Number of randomised row permutations to try.
    pub trials: usize,
    /// Rows assigned per batch; interim sizes are frozen within a batch.
    pub parallel_block: usize,
    /// Master seed; trial `t` runs on the sub-stream `mix(seed, t)`.
    pub seed: u64,
}

impl GreedyConfig {
    pub fn new(trials: usize, parallel_block: usize, seed: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        if parallel_block == 0 {
            return Err(Error::InvalidArgument("parallel_block must be >= 1".into()));
        }
        Ok(Self { trials, parallel_block, seed })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self { trials: 100, parallel_block: 10, seed: 0 }
    }
}

/// Result of a Lloyd's-style alternating optimisation.
#[derive(Debug, Clone)]
pub struct LloydOutcome {
    pub stratification: Stratification,
    /// Accepted assignment iterations (0 means the seeding was final).
    pub iterations: usize,
    /// Final value of the run's own objective; the size-weighted scatter
    /// for the weighted variant, the plain scatter for the unweighted one.
    pub cost: f64,
}

fn singleton_distance(g: &GramMatrix, i: usize, c: usize) -> f64 {
    let v = g.get(i, i) - 2.0 * g.get(i, c) + g.get(c, c);
    v.max(0.0)
}

/// Kernel k-means++ seeding: centers are drawn with probability
/// proportional to the squared feature-space distance to the nearest
/// center already chosen, then every point joins its nearest center.
pub fn kmeanspp_seed(g: &GramMatrix, k: usize, seed: u64) -> Result<Stratification> {
    let n = g.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k={k} must be in 1..={n}")));
    }
    let mut rng = seed::rng(seed);
    let mut centers = Vec::with_capacity(k);
    let first = rand::Rng::random_range(&mut rng, 0..n);
    centers.push(first);
    let mut dmin: Vec<f64> = (0..n).map(|i| singleton_distance(g, i, first)).collect();

    while centers.len() < k {
        let total: f64 = dmin.iter().sum();
        let next = if total > 0.0 {
            let r = rand::Rng::random::<f64>(&mut rng) * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in dmin.iter().enumerate() {
                if w > 0.0 {
                    acc += w;
                    chosen = Some(i);
                    if acc >= r {
                        break;
                    }
                }
            }
            chosen.expect("positive total weight")
        } else {
            // All remaining mass at distance zero (duplicate points):
            // fall back to a uniform pick among non-centers.
            let free: Vec<usize> = (0..n).filter(|i| !centers.contains(i)).collect();
            free[rand::Rng::random_range(&mut rng, 0..free.len())]
        };
        centers.push(next);
        for i in 0..n {
            let d = singleton_distance(g, i, next);
            if d < dmin[i] {
                dmin[i] = d;
            }
        }
    }

    let mut labels = vec![0usize; n];
    let mut own = vec![0.0f64; n];
    for i in 0..n {
        let mut best = f64::INFINITY;
        let mut best_c = 0;
        for (c, &center) in centers.iter().enumerate() {
            let d = singleton_distance(g, i, center);
            if d < best {
                best = d;
                best_c = c;
            }
        }
        labels[i] = best_c;
        own[i] = best;
    }
    repair_empty(&mut labels, k, |i| own[i]);
    Stratification::new(labels, k)
}

/// Moves the farthest-from-own-centroid point (among strata that can
/// spare one) into each empty stratum until none remain.
fn repair_empty<F: Fn(usize) -> f64>(labels: &mut [usize], k: usize, dist_to_own: F) {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    loop {
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { return };
        let mut donor = None;
        let mut worst = f64::NEG_INFINITY;
        for (i, &l) in labels.iter().enumerate() {
            if sizes[l] >= 2 {
                let d = dist_to_own(i);
                if d > worst {
                    worst = d;
                    donor = Some(i);
                }
            }
        }
        let donor = donor.expect("a stratum with >= 2 members exists while some stratum is empty");
        sizes[labels[donor]] -= 1;
        labels[donor] = empty;
        sizes[empty] += 1;
    }
}

/// Distance update step: `D[i][h]` is the squared feature-space distance
/// of point `i` to the centroid of stratum `h`, via the kernel trick.
pub fn distance_update(g: &GramMatrix, strat: &Stratification) -> Result<DistanceMatrix> {
    let n = g.len();
    if strat.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: strat.len() });
    }
    if strat.has_empty_strata() {
        return Err(Error::Internal("distance update against an empty stratum".into()));
    }
    let members = strat.members();
    let k = strat.k();
    // Per-stratum mean of the within-block Gram sum.
    let within: Vec<f64> = members
        .iter()
        .map(|s| {
            let m = s.len() as f64;
            let mut acc = 0.0;
            for &i in s {
                let row = g.row(i);
                for &j in s {
                    acc += row[j];
                }
            }
            acc / (m * m)
        })
        .collect();

    let mut values = vec![0.0; n * k];
    values
        .par_chunks_mut(k)
        .enumerate()
        .for_each(|(i, out)| {
            let row = g.row(i);
            let kxx = row[i];
            for (h, s) in members.iter().enumerate() {
                let cross: f64 = s.iter().map(|&j| row[j]).sum();
                let v = kxx - 2.0 * cross / s.len() as f64 + within[h];
                out[h] = v.max(0.0);
            }
        });
    Ok(DistanceMatrix { values, n, k })
}

fn greedy_one_trial(d: &DistanceMatrix, block: usize, trial_seed: u64) -> Vec<usize> {
    let n = d.rows();
    let k = d.cols();
    let mut rng = seed::rng(trial_seed);
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);

    let mut labels = vec![0usize; n];
    let mut sizes = vec![0usize; k];
    let mut snapshot = vec![0usize; k];
    for chunk in order.chunks(block) {
        snapshot.copy_from_slice(&sizes);
        for &i in chunk {
            let row = d.row(i);
            let mut best = f64::INFINITY;
            let mut best_j = 0usize;
            for (j, &dv) in row.iter().enumerate() {
                let v = dv * (snapshot[j] + 1) as f64;
                if v < best {
                    best = v;
                    best_j = j;
                }
            }
            labels[i] = best_j;
            sizes[best_j] += 1;
        }
    }
    labels
}

fn cost_of_labels(d: &DistanceMatrix, labels: &[usize]) -> f64 {
    let k = d.cols();
    let mut sum = vec![0.0f64; k];
    let mut cnt = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        sum[l] += d.get(i, l);
        cnt[l] += 1;
    }
    sum.iter().zip(&cnt).map(|(s, &c)| s * c as f64).sum()
}

/// Best-of-`trials` randomised greedy assignment against frozen centroid
/// distances. Trials run independently on derived sub-seeds (so they can
/// be executed in parallel); the lowest-cost assignment wins, ties going
/// to the lowest trial index. Empty strata in the winner are repaired.
pub fn greedy_assign(d: &DistanceMatrix, cfg: &GreedyConfig) -> Result<Stratification> {
    Ok(greedy_assign_with_cost(d, cfg)?.0)
}

/// Like [`greedy_assign`], also returning the weighted cost of the
/// returned assignment.
pub fn greedy_assign_with_cost(d: &DistanceMatrix, cfg: &GreedyConfig) -> Result<(Stratification, f64)> {
    if cfg.trials == 0 || cfg.parallel_block == 0 {
        return Err(Error::InvalidArgument("greedy config fields must be >= 1".into()));
    }
    let block = cfg.parallel_block.min(d.rows());
    let (_, _, mut labels) = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let labels = greedy_one_trial(d, block, seed::mix(cfg.seed, t as u64));
            (cost_of_labels(d, &labels), t, labels)
        })
        .reduce_with(|a, b| if (b.0, b.1) < (a.0, a.1) { b } else { a })
        .expect("at least one trial");
    let own: Vec<f64> = labels.iter().enumerate().map(|(i, &l)| d.get(i, l)).collect();
    repair_empty(&mut labels, d.cols(), |i| own[i]);
    let cost = cost_of_labels(d, &labels);
    let strat = Stratification::new(labels, d.cols())?;
    Ok((strat, cost))
}

/// Weighted cost of every individual greedy trial, in trial order and
/// without empty-stratum repair. Useful for best-vs-trials sweeps and for
/// checking each trial against the brute-force oracle.
pub fn greedy_trial_costs(d: &DistanceMatrix, cfg: &GreedyConfig) -> Result<Vec<f64>> {
    if cfg.trials == 0 || cfg.parallel_block == 0 {
        return Err(Error::InvalidArgument("greedy config fields must be >= 1".into()));
    }
    let block = cfg.parallel_block.min(d.rows());
    Ok((0..cfg.trials)
        .into_par_iter()
        .map(|t| cost_of_labels(d, &greedy_one_trial(d, block, seed::mix(cfg.seed, t as u64))))
        .collect())
}

/// Assigns every row to its nearest centroid, ignoring sizes (the
/// assignment rule of ordinary k-means). No repair is applied.
pub fn nearest_centroid_assign(d: &DistanceMatrix) -> Result<Stratification> {
    let labels = (0..d.rows())
        .map(|i| {
            let row = d.row(i);
            let mut best = f64::INFINITY;
            let mut best_j = 0;
            for (j, &v) in row.iter().enumerate() {
                if v < best {
                    best = v;
                    best_j = j;
                }
            }
            best_j
        })
        .collect();
    Stratification::new(labels, d.cols())
}

/// Size-weighted assignment cost `Σ_j |S_j| Σ_{i∈S_j} D_ij` for frozen
/// centroid distances.
pub fn weighted_cost(d: &DistanceMatrix, strat: &Stratification) -> Result<f64> {
    if strat.len() != d.rows() || strat.k() != d.cols() {
        return Err(Error::DimensionMismatch { expected: d.rows(), got: strat.len() });
    }
    Ok(cost_of_labels(d, strat.labels()))
}

/// Size-weighted scatter `Σ_h |S_h| Σ_{z∈S_h} ‖φ(z) - μ_{φ,h}‖²` with
/// centroids recomputed from the stratification itself. Empty strata
/// contribute nothing.
pub fn weighted_cost_from_gram(g: &GramMatrix, strat: &Stratification) -> Result<f64> {
    per_stratum_scatter(g, strat).map(|scatter| {
        scatter
            .iter()
            .zip(strat.sizes())
            .map(|(sc, &sz)| sc * sz as f64)
            .sum()
    })
}

/// Unweighted kernel k-means objective `Σ_h Σ_{z∈S_h} ‖φ(z) - μ_{φ,h}‖²`.
pub fn kernel_wcss(g: &GramMatrix, strat: &Stratification) -> Result<f64> {
    per_stratum_scatter(g, strat).map(|scatter| scatter.iter().sum())
}

fn per_stratum_scatter(g: &GramMatrix, strat: &Stratification) -> Result<Vec<f64>> {
    if strat.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: g.len(), got: strat.len() });
    }
    let members = strat.members();
    Ok(members
        .iter()
        .map(|s| {
            if s.is_empty() {
                return 0.0;
            }
            let m = s.len() as f64;
            let mut within = 0.0;
            let mut diag = 0.0;
            for &i in s {
                diag += g.get(i, i);
                let row = g.row(i);
                for &j in s {
                    within += row[j];
                }
            }
            // Σ_{z∈S} ‖φ(z)-μ‖² = Σ K(z,z) - (1/|S|) ΣΣ K
            (diag - within / m).max(0.0)
        })
        .collect())
}

/// Exhaustively minimises the weighted assignment cost over all `k^n`
/// assignments (frozen centroids). Ties break towards the
/// lexicographically smallest label vector. Guarded to `k^n <= 10^7`.
pub fn brute_force_assign(d: &DistanceMatrix) -> Result<Stratification> {
    let n = d.rows();
    let k = d.cols();
    let space = (k as f64).powi(n as i32);
    if !(space <= 1e7) {
        return Err(Error::CapacityExceeded(format!(
            "brute force over {k}^{n} assignments exceeds the 10^7 guard"
        )));
    }
    let mut labels = vec![0usize; n];
    let mut best_cost = f64::INFINITY;
    let mut best: Vec<usize> = labels.clone();
    loop {
        let cost = {
            let mut sum = vec![0.0f64; k];
            let mut cnt = vec![0usize; k];
            for (i, &l) in labels.iter().enumerate() {
                sum[l] += d.get(i, l);
                cnt[l] += 1;
            }
            sum.iter().zip(&cnt).map(|(s, &c)| s * c as f64).sum::<f64>()
        };
        // Strict improvement keeps the lexicographically first optimum,
        // since enumeration is in lexicographic order.
        if cost < best_cost {
            best_cost = cost;
            best.copy_from_slice(&labels);
        }
        // Odometer increment from the rightmost digit.
        let mut pos = n;
        loop {
            if pos == 0 {
                return Stratification::new(best, k);
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
        }
    }
}

/// Dynamically weighted kernel k-means: kernel k-means++ seeding, then
/// alternating distance updates and best-of-trials greedy assignments.
/// Stops when the assignment is unchanged, when the recomputed weighted
/// scatter fails to decrease (relative 1e-12), or at `max_iters`.
pub fn lloyd_weighted(
    g: &GramMatrix,
    k: usize,
    cfg: &GreedyConfig,
    max_iters: usize,
) -> Result<LloydOutcome> {
    let mut strat = kmeanspp_seed(g, k, seed::mix(cfg.seed, 0))?;
    let mut cost = weighted_cost_from_gram(g, &strat)?;
    let mut iterations = 0;
    for it in 1..=max_iters {
        let d = distance_update(g, &strat)?;
        let (cand, _) = greedy_assign_with_cost(&d, &cfg.with_seed(seed::mix(cfg.seed, it as u64)))?;
        if cand.labels() == strat.labels() {
            break;
        }
        let cand_cost = weighted_cost_from_gram(g, &cand)?;
        if cost - cand_cost < 1e-12 * cost {
            break; // no material decrease; keep the previous assignment
        }
        strat = cand;
        cost = cand_cost;
        iterations = it;
    }
    Ok(LloydOutcome { stratification: strat, iterations, cost })
}

/// Ordinary kernel k-means (nearest-centroid assignment, no size
/// weighting); the ablation counterpart of [`lloyd_weighted`].
pub fn lloyd_unweighted(
    g: &GramMatrix,
    k: usize,
    seed_value: u64,
    max_iters: usize,
) -> Result<LloydOutcome> {
    let mut strat = kmeanspp_seed(g, k, seed::mix(seed_value, 0))?;
    let mut cost = kernel_wcss(g, &strat)?;
    let mut iterations = 0;
    for it in 1..=max_iters {
        let d = distance_update(g, &strat)?;
        let mut labels = nearest_centroid_assign(&d)?.labels().to_vec();
        let own: Vec<f64> = labels.iter().enumerate().map(|(i, &l)| d.get(i, l)).collect();
        repair_empty(&mut labels, k, |i| own[i]);
        let cand = Stratification::new(labels, k)?;
        if cand.labels() == strat.labels() {
            break;
        }
        let cand_cost = kernel_wcss(g, &cand)?;
        if cost - cand_cost < 1e-12 * cost {
            break;
        }
        strat = cand;
        cost = cand_cost;
        iterations = it;
    }
    Ok(LloydOutcome { stratification: strat, iterations, cost })
}

/// Plain k-means on raw coordinates (k-means++ seeding, Lloyd updates,
/// nearest-centroid assignment); the linear baseline.
pub fn linear_kmeans(
    points: &EmbeddingSet,
    k: usize,
    seed_value: u64,
    max_iters: usize,
) -> Result<Stratification> {
    let n = points.len();
    let d = points.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k={k} must be in 1..={n}")));
    }
    let mut rng = seed::rng(seed_value);

    let sq = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };

    // k-means++ seeding on coordinates.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rand::Rng::random_range(&mut rng, 0..n);
    centers.push(points.row(first).to_vec());
    let mut dmin: Vec<f64> = (0..n).map(|i| sq(points.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dmin.iter().sum();
        let next = if total > 0.0 {
            let r = rand::Rng::random::<f64>(&mut rng) * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in dmin.iter().enumerate() {
                if w > 0.0 {
                    acc += w;
                    chosen = Some(i);
                    if acc >= r {
                        break;
                    }
                }
            }
            chosen.expect("positive total weight")
        } else {
            rand::Rng::random_range(&mut rng, 0..n)
        };
        centers.push(points.row(next).to_vec());
        for i in 0..n {
            let dist = sq(points.row(i), centers.last().unwrap());
            if dist < dmin[i] {
                dmin[i] = dist;
            }
        }
    }

    let assign = |centers: &[Vec<f64>], labels: &mut [usize], own: &mut [f64]| {
        for i in 0..n {
            let mut best = f64::INFINITY;
            let mut best_j = 0;
            for (j, c) in centers.iter().enumerate() {
                let dist = sq(points.row(i), c);
                if dist < best {
                    best = dist;
                    best_j = j;
                }
            }
            labels[i] = best_j;
            own[i] = best;
        }
    };

    let mut labels = vec![0usize; n];
    let mut own = vec![0.0f64; n];
    assign(&centers, &mut labels, &mut own);
    repair_empty(&mut labels, k, |i| own[i]);

    let wcss = |labels: &[usize], centers: &[Vec<f64>]| -> f64 {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| sq(points.row(i), &centers[l]))
            .sum()
    };

    let mut cost = f64::INFINITY;
    for _ in 0..max_iters {
        // Mean update.
        let mut sums = vec![vec![0.0f64; d]; k];
        let mut cnts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            cnts[l] += 1;
            for (acc, v) in sums[l].iter_mut().zip(points.row(i)) {
                *acc += v;
            }
        }
        for (c, (s, &cnt)) in centers.iter_mut().zip(sums.iter().zip(&cnts)) {
            if cnt > 0 {
                for (cv, sv) in c.iter_mut().zip(s) {
                    *cv = sv / cnt as f64;
                }
            }
        }
        let mut new_labels = vec![0usize; n];
        assign(&centers, &mut new_labels, &mut own);
        repair_empty(&mut new_labels, k, |i| own[i]);
        if new_labels == labels {
            break;
        }
        let new_cost = wcss(&new_labels, &centers);
        if cost.is_finite() && cost - new_cost < 1e-12 * cost {
            break;
        }
        labels = new_labels;
        cost = new_cost;
    }
    Stratification::new(labels, k)
}

/// Euclidean within-cluster sum of squares on raw coordinates.
pub fn euclidean_wcss(points: &EmbeddingSet, strat: &Stratification) -> Result<f64> {
    if strat.len() != points.len() {
        return Err(Error::DimensionMismatch { expected: points.len(), got: strat.len() });
    }
    let members = strat.members();
    let d = points.dim();
    let mut total = 0.0;
    for s in &members {
        if s.is_empty() {
            continue;
        }
        let mut mean = vec![0.0; d];
        for &i in s {
            for (acc, v) in mean.iter_mut().zip(points.row(i)) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= s.len() as f64);
        for &i in s {
            total += points
                .row(i)
                .iter()
                .zip(&mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
    }
    Ok(total)
}
