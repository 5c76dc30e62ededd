//! Measurement statistics over representation sets and attention traces:
//! anisotropy (average pairwise cosine), drift norm, softmax categoricalness,
//! pre-softmax spread, and query/key geometry.

use crate::block::AttentionTrace;
use crate::error::{Error, Result};
use crate::exec;
use crate::numerics::{
    cosine, histogram, l2_norm, mean_vector, Histogram, RngStream, DEFAULT_HISTOGRAM_BINS,
};

/// Default number of sampled pairs for anisotropy estimates. The sampling
/// standard error is always reported so downstream comparisons stay
/// sampling-aware.
pub const DEFAULT_N_PAIRS: usize = 10_000;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Monte-Carlo estimate of the mean pairwise cosine of a vector set.
#[derive(Debug, Clone, PartialEq)]
pub struct AnisotropyEstimate {
    pub mean_cosine: f64,
    pub stderr: f64,
    pub n_pairs: usize,
    pub sampling_seed: u64,
}

/// Softmax categoricalness statistics.
///
/// `avg_*` are per-query-row extrema and median averaged over all rows,
/// heads, and sequences; `seq_max`/`seq_min` are extrema over the entire
/// softmax map of one (sequence, head), averaged over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxStats {
    pub avg_max: f64,
    pub avg_median: f64,
    pub avg_min: f64,
    pub seq_max: f64,
    pub seq_min: f64,
}

/// Query/key geometry: mean row norms plus anisotropy of the pooled rows.
#[derive(Debug, Clone, PartialEq)]
pub struct QKStats {
    pub mean_q_norm: f64,
    pub mean_k_norm: f64,
    pub q_cosine: AnisotropyEstimate,
    pub k_cosine: AnisotropyEstimate,
}

/// Moments and histogram of all pre-softmax attention logits.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub histogram: Histogram,
}

// ---------------------------------------------------------------------------
// Anisotropy
// ---------------------------------------------------------------------------

/// Estimate the mean pairwise cosine by sampling `n_pairs` unordered pairs
/// of distinct indices, uniformly with replacement across draws (self-pairs
/// excluded: they contribute a trivial 1.0 and would bias the estimate up).
///
/// The sampled statistic is deterministic in the input order and the rng
/// stream; permuting the input set permutes which pairs the same draws hit.
pub fn avg_pairwise_cosine(
    vectors: &[&[f64]],
    n_pairs: usize,
    rng: &mut RngStream,
) -> Result<AnisotropyEstimate> {
    if vectors.len() < 2 {
        return Err(Error::InsufficientData {
            what: "avg_pairwise_cosine: vectors",
            needed: 2,
            got: vectors.len(),
        });
    }
    if n_pairs == 0 {
        return Err(Error::InvalidParameter {
            name: "n_pairs",
            message: "must be >= 1".to_string(),
        });
    }
    if let Some(idx) = vectors.iter().position(|v| l2_norm(v) == 0.0) {
        return Err(Error::ZeroVector { index: Some(idx) });
    }
    let n = vectors.len();
    let pairs: Vec<(usize, usize)> = (0..n_pairs)
        .map(|_| {
            let i = rng.next_index(n);
            let j = rng.next_index(n - 1);
            (i, if j >= i { j + 1 } else { j })
        })
        .collect();
    let cosines = exec::map_indexed(pairs.len(), |p| {
        let (i, j) = pairs[p];
        // zero norms were rejected above, so this cannot fail
        cosine(vectors[i], vectors[j]).expect("nonzero vectors")
    });
    let k = cosines.len() as f64;
    let mean = cosines.iter().sum::<f64>() / k;
    let stderr = if cosines.len() < 2 {
        0.0
    } else {
        let var = cosines.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    };
    Ok(AnisotropyEstimate {
        mean_cosine: mean.clamp(-1.0, 1.0),
        stderr,
        n_pairs,
        sampling_seed: rng.seed(),
    })
}

/// Norm of the average vector, `||mean(vectors)||_2`.
pub fn drift_norm(vectors: &[&[f64]]) -> Result<f64> {
    Ok(l2_norm(&mean_vector(vectors)?))
}

// ---------------------------------------------------------------------------
// Softmax statistics
// ---------------------------------------------------------------------------

/// Median with the even-length convention: mean of the two central order
/// statistics.
fn median(values: &[f64]) -> f64 {
    let mut buf = values.to_vec();
    let n = buf.len();
    let cmp = |a: &f64, b: &f64| a.partial_cmp(b).expect("finite");
    if n % 2 == 1 {
        let (_, m, _) = buf.select_nth_unstable_by(n / 2, cmp);
        *m
    } else {
        let (left, hi, _) = buf.select_nth_unstable_by(n / 2, cmp);
        let lo = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo + *hi) / 2.0
    }
}

/// Per-row max/median/min averaged over all rows, heads, and sequences,
/// plus whole-map extrema per (sequence, head) averaged over the batch.
pub fn softmax_stats(trace: &AttentionTrace) -> SoftmaxStats {
    struct Partial {
        sum_max: f64,
        sum_med: f64,
        sum_min: f64,
        rows: usize,
        map_max: f64,
        map_min: f64,
    }
    let heads: Vec<&crate::block::HeadTrace> = trace.head_traces().collect();
    let partials = exec::map_indexed(heads.len(), |idx| {
        let probs = &heads[idx].probs;
        let mut p = Partial {
            sum_max: 0.0,
            sum_med: 0.0,
            sum_min: 0.0,
            rows: 0,
            map_max: f64::NEG_INFINITY,
            map_min: f64::INFINITY,
        };
        for i in 0..probs.rows() {
            let row = probs.row(i);
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mn = row.iter().copied().fold(f64::INFINITY, f64::min);
            p.sum_max += mx;
            p.sum_min += mn;
            p.sum_med += median(row);
            p.rows += 1;
            p.map_max = p.map_max.max(mx);
            p.map_min = p.map_min.min(mn);
        }
        p
    });
    let total_rows: usize = partials.iter().map(|p| p.rows).sum();
    let n_maps = partials.len() as f64;
    SoftmaxStats {
        avg_max: partials.iter().map(|p| p.sum_max).sum::<f64>() / total_rows as f64,
        avg_median: partials.iter().map(|p| p.sum_med).sum::<f64>() / total_rows as f64,
        avg_min: partials.iter().map(|p| p.sum_min).sum::<f64>() / total_rows as f64,
        seq_max: partials.iter().map(|p| p.map_max).sum::<f64>() / n_maps,
        seq_min: partials.iter().map(|p| p.map_min).sum::<f64>() / n_maps,
    }
}

/// Moments and histogram over all pre-softmax logits of all heads and
/// sequences (100 bins, auto range).
pub fn presoftmax_spread(trace: &AttentionTrace) -> Result<SpreadStats> {
    let heads: Vec<&crate::block::HeadTrace> = trace.head_traces().collect();
    if heads.is_empty() {
        return Err(Error::EmptyInput("presoftmax_spread: trace"));
    }
    // per-head partial sums, combined in head order
    let partials = exec::map_indexed(heads.len(), |idx| {
        let data = heads[idx].logits.data();
        let sum: f64 = data.iter().sum();
        let sumsq: f64 = data.iter().map(|v| v * v).sum();
        (sum, sumsq, data.len())
    });
    let count: usize = partials.iter().map(|p| p.2).sum();
    let sum: f64 = partials.iter().map(|p| p.0).sum();
    let sumsq: f64 = partials.iter().map(|p| p.1).sum();
    let n = count as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);

    let mut all = Vec::with_capacity(count);
    for h in &heads {
        all.extend_from_slice(h.logits.data());
    }
    let histogram = histogram(&all, DEFAULT_HISTOGRAM_BINS, None)?;
    Ok(SpreadStats {
        mean,
        std: var.sqrt(),
        histogram,
    })
}

/// Pooled query/key row norms and anisotropy. Q rows of all heads and
/// sequences form one set (likewise K); cosines are sampled with the given
/// stream, queries first.
pub fn qk_stats(trace: &AttentionTrace, n_pairs: usize, rng: &mut RngStream) -> Result<QKStats> {
    let q_rows: Vec<&[f64]> = trace.head_traces().flat_map(|h| h.q.row_iter()).collect();
    let k_rows: Vec<&[f64]> = trace.head_traces().flat_map(|h| h.k.row_iter()).collect();
    let mean_q_norm = mean_row_norm(&q_rows);
    let mean_k_norm = mean_row_norm(&k_rows);
    let q_cosine = avg_pairwise_cosine(&q_rows, n_pairs, rng)?;
    let k_cosine = avg_pairwise_cosine(&k_rows, n_pairs, rng)?;
    Ok(QKStats {
        mean_q_norm,
        mean_k_norm,
        q_cosine,
        k_cosine,
    })
}

/// Mean L2 norm of a vector set (0.0 for an empty set).
pub fn mean_row_norm(vectors: &[&[f64]]) -> f64 {
    if vectors.is_empty() {
        return 0.0;
    }
    vectors.iter().map(|v| l2_norm(v)).sum::<f64>() / vectors.len() as f64
}

// ===========================================================================
// Tests
// ===========================================================================
