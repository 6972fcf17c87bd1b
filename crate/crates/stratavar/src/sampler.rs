//! Stratified and uniform minibatch sampling with weighted estimators.
//!
//! A stratified minibatch holds one uniformly drawn member per stratum,
//! weighted by `|S_h| / n`; the weighted feature mean
//! `μ̂ = Σ_h (|S_h|/n) φ(z̃_h)` is an unbiased estimate of the full-data
//! feature mean for any valid stratification. Discrepancy estimates are
//! assembled from these weighted batches on both domains.

use std::io::Write;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{eval_kernel, EmbeddingSet, GramMatrix, KernelSpec};
use crate::partition::Stratification;
use crate::seed;
use crate::variance::mc_moments_of;

/// Small negatives from cancellation in kernel expansions are clamped.
const NEG_CLAMP: f64 = 1e-9;

/// One sampled index per stratum plus the stratum weights `|S_h|/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedBatch {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl StratifiedBatch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// How often to rebuild the stratification during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    Fixed,
}

/// Periodic re-stratification schedule: rebuild every `period` iterations.
#[derive(Debug, Clone, Copy)]
pub struct ResampleSchedule {
    pub period: u64,
    pub mode: ScheduleMode,
}

impl ResampleSchedule {
    pub fn fixed(period: u64) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidArgument("schedule period must be >= 1".into()));
        }
        Ok(Self { period, mode: ScheduleMode::Fixed })
    }
}

impl Default for ResampleSchedule {
    fn default() -> Self {
        Self { period: 100, mode: ScheduleMode::Fixed }
    }
}

/// True on iterations where the stratification should be rebuilt
/// (iteration counting starts at 0, which always re-clusters).
pub fn schedule_should_recluster(iteration: u64, schedule: &ResampleSchedule) -> bool {
    match schedule.mode {
        ScheduleMode::Fixed => iteration % schedule.period == 0,
    }
}

/// Draws one member uniformly from each stratum. Convenience entry point
/// that rebuilds the member lists on every call; use [`StratifiedSampler`]
/// for repeated draws.
pub fn draw_stratified(strat: &Stratification, rng: &mut ChaCha8Rng) -> Result<StratifiedBatch> {
    if strat.has_empty_strata() {
        return Err(Error::InvalidArgument("cannot sample from an empty stratum".into()));
    }
    let members = strat.members();
    Ok(draw_from_members(&members, &strat.weights(), rng))
}

fn draw_from_members(members: &[Vec<usize>], weights: &[f64], rng: &mut ChaCha8Rng) -> StratifiedBatch {
    let indices = members
        .iter()
        .map(|s| s[rand::Rng::random_range(rng, 0..s.len())])
        .collect();
    StratifiedBatch { indices, weights: weights.to_vec() }
}

/// A stratified sampler owning its RNG stream. Instances are
/// single-threaded; run independent instances with distinct seeds for
/// concurrent sampling.
#[derive(Debug, Clone)]
pub struct StratifiedSampler {
    members: Vec<Vec<usize>>,
    weights: Vec<f64>,
    rng: ChaCha8Rng,
}

impl StratifiedSampler {
    pub fn new(strat: &Stratification, seed_value: u64) -> Result<Self> {
        if strat.has_empty_strata() {
            return Err(Error::InvalidArgument("cannot sample from an empty stratum".into()));
        }
        Ok(Self {
            members: strat.members(),
            weights: strat.weights(),
            rng: seed::rng(seed_value),
        })
    }

    pub fn draw(&mut self) -> StratifiedBatch {
        draw_from_members(&self.members, &self.weights, &mut self.rng)
    }
}

/// `k` indices drawn without replacement, all weighted `1/k`.
pub fn uniform_batch(points: &EmbeddingSet, k: usize, rng: &mut ChaCha8Rng) -> Result<StratifiedBatch> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k={k} must be in 1..={n}")));
    }
    let indices = rand::seq::index::sample(rng, n, k).into_vec();
    Ok(StratifiedBatch { indices, weights: vec![1.0 / k as f64; k] })
}

/// Weighted feature mean `Σ_h w_h φ(z̃_h)` under an explicit feature map
/// (pass the identity for the linear kernel).
pub fn estimate_mean_embedding<F>(
    batch: &StratifiedBatch,
    points: &EmbeddingSet,
    feature_map: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut out: Option<Vec<f64>> = None;
    for (&i, &w) in batch.indices.iter().zip(&batch.weights) {
        if i >= points.len() {
            return Err(Error::InvalidArgument(format!("batch index {i} out of range")));
        }
        let phi = feature_map(points.row(i));
        match &mut out {
            None => {
                let mut acc = phi;
                acc.iter_mut().for_each(|v| *v *= w);
                out = Some(acc);
            }
            Some(acc) => {
                if acc.len() != phi.len() {
                    return Err(Error::DimensionMismatch { expected: acc.len(), got: phi.len() });
                }
                for (a, p) in acc.iter_mut().zip(&phi) {
                    *a += w * p;
                }
            }
        }
    }
    Ok(out.expect("non-empty batch"))
}

/// Weighted squared-distance estimate between the two domains' mean
/// embeddings, expanded through the kernel:
/// `Σ wᵢwⱼ κ(zᵢˢ,zⱼˢ) + Σ wᵢwⱼ κ(zᵢᵗ,zⱼᵗ) − 2 Σ wᵢwⱼ κ(zᵢˢ,zⱼᵗ)`.
pub fn estimate_mmd(
    batch_s: &StratifiedBatch,
    batch_t: &StratifiedBatch,
    points_s: &EmbeddingSet,
    points_t: &EmbeddingSet,
    spec: &KernelSpec,
) -> Result<f64> {
    let pair_sum = |ba: &StratifiedBatch, pa: &EmbeddingSet, bb: &StratifiedBatch, pb: &EmbeddingSet| -> Result<f64> {
        let mut acc = 0.0;
        for (&i, &wi) in ba.indices.iter().zip(&ba.weights) {
            for (&j, &wj) in bb.indices.iter().zip(&bb.weights) {
                acc += wi * wj * eval_kernel(spec, pa.row(i), pb.row(j))?;
            }
        }
        Ok(acc)
    };
    let ss = pair_sum(batch_s, points_s, batch_s, points_s)?;
    let tt = pair_sum(batch_t, points_t, batch_t, points_t)?;
    let st = pair_sum(batch_s, points_s, batch_t, points_t)?;
    let v = ss + tt - 2.0 * st;
    debug_assert!(v >= -NEG_CLAMP, "kernel expansion gave {v}");
    Ok(v.max(0.0))
}

/// Squared Frobenius distance between the two domains' weighted sample
/// covariances, each built from its stratified batch with the `1/(n-1)`
/// bias correction and the batch-estimated mean.
pub fn estimate_coral(
    batch_s: &StratifiedBatch,
    batch_t: &StratifiedBatch,
    points_s: &EmbeddingSet,
    points_t: &EmbeddingSet,
) -> Result<f64> {
    let d = points_s.dim();
    if points_t.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: points_t.dim() });
    }
    let rs = weighted_covariance(batch_s, points_s)?;
    let rt = weighted_covariance(batch_t, points_t)?;
    Ok(rs.iter().zip(&rt).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `R̂ = (1/(n-1)) Σ_h |S_h| (z̃_h - μ̂)(z̃_h - μ̂)ᵀ` as a flat row-major
/// `d x d` buffer, with `μ̂ = Σ_h (|S_h|/n) z̃_h`.
fn weighted_covariance(batch: &StratifiedBatch, points: &EmbeddingSet) -> Result<Vec<f64>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two points for a covariance".into()));
    }
    let d = points.dim();
    let mu = estimate_mean_embedding(batch, points, |z| z.to_vec())?;
    let mut cov = vec![0.0; d * d];
    let scale = n as f64 / (n as f64 - 1.0); // |S_h| = w_h * n, so γ * w_h
    for (&i, &w) in batch.indices.iter().zip(&batch.weights) {
        let z = points.row(i);
        for a in 0..d {
            let da = z[a] - mu[a];
            for b in 0..d {
                cov[a * d + b] += scale * w * da * (z[b] - mu[b]);
            }
        }
    }
    Ok(cov)
}

/// Mean and standard error of a seeded Monte Carlo scalar.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
}

impl McEstimate {
    /// 95% confidence interval as (low, high).
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.std_err, self.mean + 1.96 * self.std_err)
    }
}

/// Monte Carlo estimate of `Var(μ̂) = E‖μ̂ − μ̄‖²` for stratified draws,
/// where `μ̄` is the exact full-data feature mean. Each trial draws one
/// batch and evaluates the squared distance via kernel expansions.
pub fn mc_mu_variance_stratified(
    g: &GramMatrix,
    strat: &Stratification,
    trials: usize,
    seed_value: u64,
) -> Result<McEstimate> {
    if strat.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: g.len(), got: strat.len() });
    }
    if strat.has_empty_strata() {
        return Err(Error::InvalidArgument("cannot sample from an empty stratum".into()));
    }
    let members = strat.members();
    let weights = strat.weights();
    let (row_means, grand_mean) = gram_row_means(g);
    let moments = mc_moments_of(
        |rng, out| {
            let batch = draw_from_members(&members, &weights, rng);
            out[0] = rkhs_sq_dist_to_full_mean(g, &batch, &row_means, grand_mean);
        },
        1,
        trials,
        seed_value,
    )?;
    Ok(McEstimate { mean: moments.mean()[0], std_err: moments.std_err(), trials })
}

/// Monte Carlo estimate of `Var(μ̂)` for uniform without-replacement
/// batches of size `k` with weights `1/k`.
pub fn mc_mu_variance_uniform(
    g: &GramMatrix,
    points: &EmbeddingSet,
    k: usize,
    trials: usize,
    seed_value: u64,
) -> Result<McEstimate> {
    if points.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: g.len(), got: points.len() });
    }
    if k == 0 || k > points.len() {
        return Err(Error::InvalidArgument(format!("k={k} must be in 1..={}", points.len())));
    }
    let (row_means, grand_mean) = gram_row_means(g);
    let moments = mc_moments_of(
        |rng, out| {
            let batch = uniform_batch(points, k, rng).expect("validated k");
            out[0] = rkhs_sq_dist_to_full_mean(g, &batch, &row_means, grand_mean);
        },
        1,
        trials,
        seed_value,
    )?;
    Ok(McEstimate { mean: moments.mean()[0], std_err: moments.std_err(), trials })
}

fn gram_row_means(g: &GramMatrix) -> (Vec<f64>, f64) {
    let n = g.len();
    let row_means: Vec<f64> =
        (0..n).map(|i| g.row(i).iter().sum::<f64>() / n as f64).collect();
    let grand_mean = row_means.iter().sum::<f64>() / n as f64;
    (row_means, grand_mean)
}

/// `‖Σ wᵢ φ(zᵢ) − μ̄‖²` via the kernel trick, with precomputed Gram row
/// means and grand mean.
fn rkhs_sq_dist_to_full_mean(
    g: &GramMatrix,
    batch: &StratifiedBatch,
    row_means: &[f64],
    grand_mean: f64,
) -> f64 {
    let mut bb = 0.0;
    let mut cross = 0.0;
    for (&i, &wi) in batch.indices.iter().zip(&batch.weights) {
        cross += wi * row_means[i];
        let row = g.row(i);
        for (&j, &wj) in batch.indices.iter().zip(&batch.weights) {
            bb += wi * wj * row[j];
        }
    }
    (bb - 2.0 * cross + grand_mean).max(0.0)
}

/// Header for batch log CSV files.
pub const BATCH_LOG_HEADER: &str = "iteration,indices,weights,estimate";

/// Appends one batch log row: indices and weights are `;`-joined within
/// their CSV fields.
pub fn write_batch_log<W: Write>(
    w: &mut W,
    iteration: u64,
    batch: &StratifiedBatch,
    estimate: f64,
) -> std::io::Result<()> {
    let idx = batch
        .indices
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(";");
    let wts = batch
        .weights
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";");
    writeln!(w, "{iteration},{idx},{wts},{estimate}")
}
