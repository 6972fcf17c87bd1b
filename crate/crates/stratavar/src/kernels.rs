//! Kernel evaluation, Gram matrices, and kernel-trick distances.
//!
//! Three kernels are supported:
//!
//! - an RBF mixture `κ(z,z') = Σ_γ exp(-γ‖z-z'‖²)` over a set of
//!   bandwidth parameters,
//! - a centered polynomial kernel `κ_c(z,z') = ((z-μ)ᵀ(z'-μ))²`, whose
//!   explicit feature map is the outer product `(z-μ)(z-μ)ᵀ`, used for
//!   covariance-alignment objectives,
//! - the plain linear kernel `κ(z,z') = zᵀz'`.
//!
//! Squared distances from a point to the mean of a set in the implicit
//! feature space are computed with the kernel trick:
//!
//! ```text
//! ‖φ(x) - μ_S‖² = K(x,x) - (2/|S|) Σ_{j∈S} K(x,j) + (1/|S|²) Σ_{i,j∈S} K(i,j)
//! ```
//!
//! so no explicit feature map is ever materialised.

use std::io::BufRead;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// A centered-distance result this close to zero (from cancellation in
/// the three-term kernel-trick expansion) is clamped to exactly zero.
const NEG_CLAMP: f64 = 1e-9;

/// An `n x d` matrix of feature vectors with stable per-point ids.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    data: Vec<f64>, // row-major, n * d
    n: usize,
    d: usize,
    ids: Vec<usize>,
}

impl EmbeddingSet {
    /// Builds an embedding set from row vectors. All rows must share one
    /// dimension and every entry must be finite. Ids default to row order.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("embedding set must be non-empty".into()));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be >= 1".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: row.len() });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "non-finite value at point {i}, coordinate {j}"
                    )));
                }
                data.push(v);
            }
        }
        let n = rows.len();
        Ok(Self { data, n, d, ids: (0..n).collect() })
    }

    /// Builds an embedding set from a flat row-major buffer.
    pub fn from_flat(data: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 || data.is_empty() || data.len() % d != 0 {
            return Err(Error::InvalidArgument(format!(
                "flat buffer of length {} is not a multiple of dimension {d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at point {}, coordinate {}",
                pos / d,
                pos % d
            )));
        }
        let n = data.len() / d;
        Ok(Self { data, n, d, ids: (0..n).collect() })
    }

    /// Parses embeddings from CSV: one row per point, `d` numeric columns,
    /// comma delimiter, decimal point. With `has_header` the first line is
    /// skipped. Errors carry 1-based row/column positions.
    pub fn from_csv_reader<R: BufRead>(reader: R, has_header: bool) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width: Option<usize> = None;
        for (line_no, line) in reader.lines().enumerate() {
            let row = line_no + 1;
            let line = line.map_err(|e| Error::Parse { row, col: 0, msg: e.to_string() })?;
            if line_no == 0 && has_header {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut values = Vec::new();
            for (field_no, field) in line.split(',').enumerate() {
                let col = field_no + 1;
                let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    row,
                    col,
                    msg: format!("expected a number, found {:?}", field.trim()),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse { row, col, msg: "non-finite value".into() });
                }
                values.push(v);
            }
            match width {
                None => width = Some(values.len()),
                Some(w) if w != values.len() => {
                    return Err(Error::Parse {
                        row,
                        col: values.len(),
                        msg: format!("expected {w} columns, found {}", values.len()),
                    });
                }
                _ => {}
            }
            rows.push(values);
        }
        if rows.is_empty() {
            return Err(Error::Parse { row: 0, col: 0, msg: "no data rows".into() });
        }
        Self::from_rows(rows)
    }

    /// Reads embeddings from a CSV file on disk.
    pub fn from_csv_path<P: AsRef<Path>>(path: P, has_header: bool) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::Parse {
            row: 0,
            col: 0,
            msg: format!("{}: {e}", path.as_ref().display()),
        })?;
        Self::from_csv_reader(std::io::BufReader::new(file), has_header)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: n >= 1
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Coordinate-wise mean of the whole set.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for i in 0..self.n {
            for (acc, &v) in m.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        let inv = 1.0 / self.n as f64;
        m.iter_mut().for_each(|v| *v *= inv);
        m
    }
}

/// Kernel definition.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `κ(z,z') = Σ_γ exp(-γ‖z-z'‖²)`; every γ must be positive.
    RbfMixture { gammas: Vec<f64> },
    /// `κ_c(z,z') = ((z-μ)ᵀ(z'-μ))²` for a fixed center μ.
    CoralPoly { center: Vec<f64> },
    /// `κ(z,z') = zᵀz'`.
    Linear,
}

impl KernelSpec {
    pub fn rbf_mixture(gammas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::InvalidArgument("RBF mixture needs at least one gamma".into()));
        }
        if let Some(&g) = gammas.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::InvalidArgument(format!("RBF gamma must be positive, got {g}")));
        }
        Ok(Self::RbfMixture { gammas })
    }

    /// Single-bandwidth RBF kernel.
    pub fn rbf(gamma: f64) -> Result<Self> {
        Self::rbf_mixture(vec![gamma])
    }

    pub fn coral_poly(center: Vec<f64>) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidArgument("CoralPoly center must be non-empty".into()));
        }
        Ok(Self::CoralPoly { center })
    }

    /// CoralPoly kernel centered on the full-dataset mean, computed once
    /// here at construction.
    pub fn coral_poly_from_mean(points: &EmbeddingSet) -> Self {
        Self::CoralPoly { center: points.mean() }
    }

    pub fn linear() -> Self {
        Self::Linear
    }
}

/// Evaluates `κ(z, z')`. Symmetric in its vector arguments.
pub fn eval_kernel(spec: &KernelSpec, z: &[f64], zp: &[f64]) -> Result<f64> {
    if z.len() != zp.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: zp.len() });
    }
    match spec {
        KernelSpec::RbfMixture { gammas } => {
            let sq: f64 = z.iter().zip(zp).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok(gammas.iter().map(|g| (-g * sq).exp()).sum())
        }
        KernelSpec::CoralPoly { center } => {
            if center.len() != z.len() {
                return Err(Error::DimensionMismatch { expected: center.len(), got: z.len() });
            }
            let dot: f64 = z
                .iter()
                .zip(zp)
                .zip(center)
                .map(|((a, b), m)| (a - m) * (b - m))
                .sum();
            Ok(dot * dot)
        }
        KernelSpec::Linear => Ok(z.iter().zip(zp).map(|(a, b)| a * b).sum()),
    }
}

/// Dense symmetric matrix of kernel values over an embedding set.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    values: Vec<f64>, // row-major, n * n, exactly symmetric by construction
    n: usize,
    kernel: KernelSpec,
    ids: Vec<usize>,
}

impl GramMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Row `i` as a slice, `K(i, ·)`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Materialises the Gram matrix `K[i][j] = κ(zᵢ, zⱼ)`.
///
/// The upper triangle is computed and mirrored, so the result is exactly
/// symmetric.
pub fn gram(points: &EmbeddingSet, spec: &KernelSpec) -> Result<GramMatrix> {
    // Surface dimension errors before the parallel fill.
    eval_kernel(spec, points.row(0), points.row(0))?;

    let n = points.len();
    let mut values = vec![0.0; n * n];
    values
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            for j in i..n {
                // unwrap: dimensions were checked above
                row[j] = eval_kernel(spec, points.row(i), points.row(j)).unwrap();
            }
        });
    for i in 0..n {
        for j in 0..i {
            values[i * n + j] = values[j * n + i];
        }
    }
    Ok(GramMatrix { values, n, kernel: spec.clone(), ids: points.ids().to_vec() })
}

/// Squared feature-space distance from point `x` to the centroid of the
/// member set `s`, via the kernel trick. Small negatives from floating
/// point cancellation are clamped to zero.
pub fn centroid_sq_distance(g: &GramMatrix, s: &[usize], x: usize) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::InvalidArgument("centroid of an empty member set".into()));
    }
    let n = g.len();
    if x >= n || s.iter().any(|&i| i >= n) {
        return Err(Error::InvalidArgument("point index out of range".into()));
    }
    let m = s.len() as f64;
    let cross: f64 = s.iter().map(|&j| g.get(x, j)).sum();
    let mut within = 0.0;
    for &i in s {
        let row = g.row(i);
        for &j in s {
            within += row[j];
        }
    }
    let v = g.get(x, x) - 2.0 * cross / m + within / (m * m);
    debug_assert!(v >= -NEG_CLAMP, "kernel-trick distance {v} below clamp tolerance");
    Ok(if v < 0.0 { 0.0 } else { v })
}
