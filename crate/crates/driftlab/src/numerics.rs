//! Deterministic linear algebra, random sampling, and elementwise kernels.
//!
//! Everything here is 64-bit and bit-reproducible: matrix products use a
//! fixed loop order, and all randomness flows through [`RngStream`], a
//! ChaCha8 generator with explicit sub-stream derivation so that parallel
//! callers can never perturb each other's draws.

use crate::error::{Error, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Build a matrix from row-major data, validating length and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidParameter {
                name: "matrix data",
                message: format!("expected {} values, got {}", rows * cols, data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: "Matrix::new" });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::ShapeMismatch {
                    op: "Matrix::from_rows",
                    left: (1, n_cols),
                    right: (1, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::new(n_rows, n_cols, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Iterator over row slices.
    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Copy of the column block `[from, to)` as a new matrix.
    pub fn col_slice(&self, from: usize, to: usize) -> Matrix {
        assert!(from <= to && to <= self.cols);
        let width = to - from;
        let mut out = Matrix::zeros(self.rows, width);
        for i in 0..self.rows {
            out.row_mut(i)
                .copy_from_slice(&self.data[i * self.cols + from..i * self.cols + to]);
        }
        out
    }

    /// Overwrite the column block starting at `from` with `block`.
    pub fn set_col_slice(&mut self, from: usize, block: &Matrix) {
        assert_eq!(self.rows, block.rows);
        assert!(from + block.cols <= self.cols);
        for i in 0..self.rows {
            self.data[i * self.cols + from..i * self.cols + from + block.cols]
                .copy_from_slice(block.row(i));
        }
    }

    /// Matrix product with a fixed summation order (row-blocked, k-outer,
    /// axpy inner loop), so repeated calls are bit-identical.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let (m, kk, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0f64; m * n];
        const ROW_BLOCK: usize = 32;
        for i0 in (0..m).step_by(ROW_BLOCK) {
            let i1 = (i0 + ROW_BLOCK).min(m);
            for k in 0..kk {
                let b_row = &other.data[k * n..(k + 1) * n];
                for i in i0..i1 {
                    let a_ik = self.data[i * kk + k];
                    let c_row = &mut out[i * n..(i + 1) * n];
                    for (c, &b) in c_row.iter_mut().zip(b_row) {
                        *c += a_ik * b;
                    }
                }
            }
        }
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: "matmul" });
        }
        Ok(Matrix {
            rows: m,
            cols: n,
            data: out,
        })
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                op: "add",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Add `v` to every row in place (bias broadcast).
    pub fn add_row_vector(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.cols {
            return Err(Error::ShapeMismatch {
                op: "add_row_vector",
                left: (self.rows, self.cols),
                right: (1, v.len()),
            });
        }
        for row in self.data.chunks_exact_mut(self.cols) {
            for (x, b) in row.iter_mut().zip(v) {
                *x += b;
            }
        }
        Ok(())
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Row-wise softmax with per-row max subtraction for overflow safety.
pub fn softmax_rows(m: &Matrix) -> Result<Matrix> {
    if m.data.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite { op: "softmax_rows" });
    }
    let mut out = Matrix::zeros(m.rows, m.cols);
    for i in 0..m.rows {
        let row = m.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dst = out.row_mut(i);
        let mut sum = 0.0;
        for (d, &x) in dst.iter_mut().zip(row) {
            let e = (x - max).exp();
            *d = e;
            sum += e;
        }
        for d in dst.iter_mut() {
            *d /= sum;
        }
    }
    Ok(out)
}

/// Layer normalization with population (1/d) variance:
/// `(v - mean)/sqrt(var + eps) * gamma + beta`.
///
/// `eps` may be zero when the input variance is nonzero; a negative `eps`
/// is rejected.
pub fn layer_norm(v: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::EmptyInput("layer_norm"));
    }
    if gamma.len() != v.len() || beta.len() != v.len() {
        return Err(Error::ShapeMismatch {
            op: "layer_norm",
            left: (1, v.len()),
            right: (1, gamma.len().max(beta.len())),
        });
    }
    if eps < 0.0 {
        return Err(Error::InvalidParameter {
            name: "eps",
            message: format!("must be >= 0, got {eps}"),
        });
    }
    let d = v.len() as f64;
    let mean = v.iter().sum::<f64>() / d;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d;
    let denom = (var + eps).sqrt();
    let out: Vec<f64> = v
        .iter()
        .zip(gamma.iter().zip(beta))
        .map(|(x, (g, b))| (x - mean) / denom * g + b)
        .collect();
    if !out.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite { op: "layer_norm" });
    }
    Ok(out)
}

/// Cosine similarity, clamped into `[-1, 1]` against rounding.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch {
            op: "cosine",
            left: (1, u.len()),
            right: (1, v.len()),
        });
    }
    let nu = l2_norm(u);
    let nv = l2_norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector { index: None });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Coordinate-wise mean of a set of equal-length vectors.
pub fn mean_vector(vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(Error::EmptyInput("mean_vector"))?;
    let dim = first.len();
    let mut acc = vec![0.0f64; dim];
    for v in vectors {
        if v.len() != dim {
            return Err(Error::ShapeMismatch {
                op: "mean_vector",
                left: (1, dim),
                right: (1, v.len()),
            });
        }
        for (a, x) in acc.iter_mut().zip(*v) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    for a in acc.iter_mut() {
        *a /= n;
    }
    Ok(acc)
}

/// Error function via the Abramowitz & Stegun 7.1.26 rational approximation
/// (maximum absolute error 1.5e-7).
pub fn erf_approx(x: f64) -> f64 {
    const P: f64 = 0.327_591_1;
    const A1: f64 = 0.254_829_592;
    const A2: f64 = -0.284_496_736;
    const A3: f64 = 1.421_413_741;
    const A4: f64 = -1.453_152_027;
    const A5: f64 = 1.061_405_429;
    if x == 0.0 {
        return 0.0;
    }
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + P * x);
    let poly = ((((A5 * t + A4) * t + A3) * t + A2) * t + A1) * t;
    sign * (1.0 - poly * (-x * x).exp())
}

/// GELU activation, `x/2 * (1 + erf(x/sqrt(2)))`.
pub fn gelu(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| 0.5 * x * (1.0 + erf_approx(x / std::f64::consts::SQRT_2)))
        .collect()
}

// ---------------------------------------------------------------------------
// Histogram
// ---------------------------------------------------------------------------

/// Fixed-width histogram; `edges` has one more entry than `counts`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Default bin count used when callers do not override it.
pub const DEFAULT_HISTOGRAM_BINS: usize = 100;

/// Bin `values` into `bins` equal-width bins over `range` (auto = finite
/// min..max when `None`). Values are counted when `lo <= x <= hi`; the last
/// bin is closed on the right. A degenerate auto range (all values equal) is
/// widened by 0.5 on each side.
pub fn histogram(values: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::EmptyInput("histogram"));
    }
    if bins == 0 {
        return Err(Error::InvalidParameter {
            name: "bins",
            message: "must be >= 1".to_string(),
        });
    }
    let (mut lo, mut hi) = match range {
        Some((lo, hi)) => {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParameter {
                    name: "range",
                    message: format!("need finite lo < hi, got [{lo}, {hi}]"),
                });
            }
            (lo, hi)
        }
        None => {
            let finite = values.iter().copied().filter(|v| v.is_finite());
            let lo = finite.clone().fold(f64::INFINITY, f64::min);
            let hi = finite.fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                return Err(Error::NonFinite { op: "histogram" });
            }
            (lo, hi)
        }
    };
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in values {
        if v < lo || v > hi || !v.is_finite() {
            continue;
        }
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    Ok(Histogram { edges, counts })
}

// ---------------------------------------------------------------------------
// RngStream
// ---------------------------------------------------------------------------

/// Seeded random stream: ChaCha8 keyed by the master seed, with the ChaCha
/// stream id carrying the sub-stream index. Sub-streams derived from the
/// same seed but distinct indices are independent by construction, so
/// parallel consumers cannot change each other's draws.
///
/// Normal variates come from the Marsaglia polar method (the second variate
/// of each accepted pair is cached), which fixes the sample sequence across
/// platforms.
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
    pending_normal: Option<f64>,
}

impl RngStream {
    /// Generator family identifier recorded in run manifests.
    pub const ALGORITHM: &'static str = "chacha8/polar";

    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Stream `index` of master seed `seed`.
    pub fn with_stream(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        RngStream {
            seed,
            stream: index,
            rng,
            pending_normal: None,
        }
    }

    /// Derive the sub-stream `index` of this stream's master seed.
    pub fn substream(&self, index: u64) -> Self {
        Self::with_stream(self.seed, index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random mantissa bits.
    pub fn next_f64(&mut self) -> f64 {
        // 2^-53
        (self.next_u64() >> 11) as f64 * 1.110_223_024_625_156_5e-16
    }

    /// Uniform index in `[0, n)` via rejection (no modulo bias).
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_index: n must be positive");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return (x % n) as usize;
            }
        }
    }

    /// Standard normal variate (Marsaglia polar).
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.pending_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = (-2.0 * s.ln() / s).sqrt();
                self.pending_normal = Some(v * m);
                return u * m;
            }
        }
    }
}

/// Vector of `dim` i.i.d. standard normal samples.
pub fn gaussian_vector(rng: &mut RngStream, dim: usize) -> Vec<f64> {
    assert!(dim >= 1, "gaussian_vector: dim must be >= 1");
    (0..dim).map(|_| rng.next_normal()).collect()
}

// ===========================================================================
// Tests
// ===========================================================================
