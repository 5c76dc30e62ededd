//! One BERT-base-style encoder block with instrumented attention.
//!
//! The block is post-layer-norm (MHSA -> residual -> LN -> FFN -> residual
//! -> LN), runs in inference mode (no dropout, no attention mask), and can
//! capture every per-head attention quantity: Q, K, the scaled pre-softmax
//! logits, and the softmax rows.
//!
//! No positional or segment embeddings are added by default: inputs are
//! embedding rows plus an optional shared bias vector, so position signals
//! cannot contaminate controlled drift experiments. A config flag restores
//! randomly initialized positional embeddings for sensitivity studies.

use crate::error::{Error, Result};
use crate::exec;
use crate::numerics::{gaussian_vector, l2_norm, layer_norm, softmax_rows, Matrix, RngStream};

/// Sub-stream indices used when deriving randomness from a master seed.
pub const PARAMS_STREAM: u64 = 0;
pub const INPUTS_STREAM: u64 = 1;
pub const BIAS_STREAM: u64 = 2;
/// First sub-stream index reserved for per-grid-point metric sampling.
pub const METRICS_STREAM_BASE: u64 = 16;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Block geometry and initialization parameters (defaults are BERT-base).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub n_sequences: usize,
    pub layernorm_eps: f64,
    pub init_std: f64,
    pub seed: u64,
    /// Skip the FFN sublayer (attention + residual + LN only).
    pub attention_only: bool,
    /// Add randomly initialized positional embeddings to sampled inputs.
    pub positional: bool,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig {
            d_model: 768,
            n_heads: 12,
            d_ff: 3072,
            vocab_size: 30522,
            seq_len: 512,
            n_sequences: 16,
            layernorm_eps: 1e-12,
            init_std: 0.02,
            seed: 0,
            attention_only: false,
            positional: false,
        }
    }
}

impl BlockConfig {
    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return Err(Error::InvalidParameter {
                name: "config",
                message: "d_model, n_heads, d_ff must be >= 1".to_string(),
            });
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidParameter {
                name: "config",
                message: format!(
                    "d_model {} not divisible by n_heads {}",
                    self.d_model, self.n_heads
                ),
            });
        }
        if self.vocab_size == 0 || self.seq_len == 0 || self.n_sequences == 0 {
            return Err(Error::InvalidParameter {
                name: "config",
                message: "vocab_size, seq_len, n_sequences must be >= 1".to_string(),
            });
        }
        if !(self.init_std > 0.0) {
            return Err(Error::InvalidParameter {
                name: "init_std",
                message: format!("must be > 0, got {}", self.init_std),
            });
        }
        if !(self.layernorm_eps > 0.0) {
            return Err(Error::InvalidParameter {
                name: "layernorm_eps",
                message: format!("must be > 0, got {}", self.layernorm_eps),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Full weight set of one encoder block plus the embedding table.
///
/// Weights are truncated normal(0, init_std^2), resampled beyond
/// +/- 2 init_std; biases start at zero and layer-norm affines at
/// gamma = 1, beta = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub embedding: Matrix,
    pub w_q: Matrix,
    pub b_q: Vec<f64>,
    pub w_k: Matrix,
    pub b_k: Vec<f64>,
    pub w_v: Matrix,
    pub b_v: Vec<f64>,
    pub w_o: Matrix,
    pub b_o: Vec<f64>,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub ln1_gamma: Vec<f64>,
    pub ln1_beta: Vec<f64>,
    pub ln2_gamma: Vec<f64>,
    pub ln2_beta: Vec<f64>,
    pub pos_embeddings: Option<Matrix>,
    pub d_head: usize,
    pub n_heads: usize,
    pub layernorm_eps: f64,
    pub attention_only: bool,
}

/// One truncated-normal variate: resample until |z| <= 2, then scale.
fn truncated_normal(rng: &mut RngStream, std: f64) -> f64 {
    loop {
        let z = rng.next_normal();
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

fn truncated_normal_matrix(rng: &mut RngStream, rows: usize, cols: usize, std: f64) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for v in m.row_mut(i) {
            *v = truncated_normal(rng, std);
        }
    }
    m
}

/// Initialize block parameters deterministically from `config.seed`.
///
/// Sampling order is fixed (embedding table, then W_Q, W_K, W_V, W_O, W1,
/// W2, then positional embeddings when enabled), all from the params
/// sub-stream, so identical configs produce bit-identical parameters.
pub fn init_params(config: &BlockConfig) -> Result<BlockParams> {
    config.validate()?;
    let mut rng = RngStream::with_stream(config.seed, PARAMS_STREAM);
    let d = config.d_model;
    let std = config.init_std;
    let embedding = truncated_normal_matrix(&mut rng, config.vocab_size, d, std);
    let w_q = truncated_normal_matrix(&mut rng, d, d, std);
    let w_k = truncated_normal_matrix(&mut rng, d, d, std);
    let w_v = truncated_normal_matrix(&mut rng, d, d, std);
    let w_o = truncated_normal_matrix(&mut rng, d, d, std);
    let w1 = truncated_normal_matrix(&mut rng, d, config.d_ff, std);
    let w2 = truncated_normal_matrix(&mut rng, config.d_ff, d, std);
    let pos_embeddings = config
        .positional
        .then(|| truncated_normal_matrix(&mut rng, config.seq_len, d, std));
    Ok(BlockParams {
        embedding,
        w_q,
        b_q: vec![0.0; d],
        w_k,
        b_k: vec![0.0; d],
        w_v,
        b_v: vec![0.0; d],
        w_o,
        b_o: vec![0.0; d],
        w1,
        b1: vec![0.0; config.d_ff],
        w2,
        b2: vec![0.0; d],
        ln1_gamma: vec![1.0; d],
        ln1_beta: vec![0.0; d],
        ln2_gamma: vec![1.0; d],
        ln2_beta: vec![0.0; d],
        pos_embeddings,
        d_head: config.d_head(),
        n_heads: config.n_heads,
        layernorm_eps: config.layernorm_eps,
        attention_only: config.attention_only,
    })
}

// ---------------------------------------------------------------------------
// Batches and traces
// ---------------------------------------------------------------------------

/// A batch of hidden-vector sequences, one `seq_len x d_model` matrix each.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationBatch {
    pub sequences: Vec<Matrix>,
}

impl RepresentationBatch {
    pub fn n_sequences(&self) -> usize {
        self.sequences.len()
    }

    pub fn seq_len(&self) -> usize {
        self.sequences.first().map_or(0, Matrix::rows)
    }

    pub fn d_model(&self) -> usize {
        self.sequences.first().map_or(0, Matrix::cols)
    }

    /// All hidden vectors pooled across sequences and positions.
    pub fn pooled_rows(&self) -> Vec<&[f64]> {
        self.sequences.iter().flat_map(Matrix::row_iter).collect()
    }

    /// Mean L2 norm over all positions and sequences.
    pub fn mean_row_norm(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for seq in &self.sequences {
            for row in seq.row_iter() {
                sum += l2_norm(row);
                count += 1;
            }
        }
        sum / count as f64
    }

    /// Batch with `bias` added to every position of every sequence.
    pub fn with_bias(&self, bias: &[f64]) -> Result<RepresentationBatch> {
        let mut sequences = self.sequences.clone();
        for seq in &mut sequences {
            seq.add_row_vector(bias)?;
        }
        Ok(RepresentationBatch { sequences })
    }
}

/// Captured attention quantities for one head of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTrace {
    /// `seq_len x d_head` query rows.
    pub q: Matrix,
    /// `seq_len x d_head` key rows.
    pub k: Matrix,
    /// `seq_len x seq_len` scaled pre-softmax logits, QK^T / sqrt(d_head).
    pub logits: Matrix,
    /// `seq_len x seq_len` softmax rows.
    pub probs: Matrix,
}

/// Attention capture for a whole batch, ordered by sequence then head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub n_heads: usize,
    pub d_head: usize,
    pub seq_len: usize,
    /// `per_sequence[s][h]` is head `h` of sequence `s`.
    pub per_sequence: Vec<Vec<HeadTrace>>,
}

impl AttentionTrace {
    /// Iterator over all head traces in (sequence, head) order.
    pub fn head_traces(&self) -> impl Iterator<Item = &HeadTrace> {
        self.per_sequence.iter().flatten()
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Draw input sequences: every position independently uniform over rows of
/// the embedding table (with replacement). When `config.positional` is set,
/// the params' positional embeddings are added after lookup.
pub fn sample_inputs(
    params: &BlockParams,
    config: &BlockConfig,
    rng: &mut RngStream,
) -> Result<RepresentationBatch> {
    config.validate()?;
    let vocab = params.embedding.rows();
    let mut sequences = Vec::with_capacity(config.n_sequences);
    for _ in 0..config.n_sequences {
        let mut seq = Matrix::zeros(config.seq_len, config.d_model);
        for pos in 0..config.seq_len {
            let token = rng.next_index(vocab);
            seq.row_mut(pos).copy_from_slice(params.embedding.row(token));
        }
        if let Some(pos_emb) = &params.pos_embeddings {
            seq = seq.add(pos_emb)?;
        }
        sequences.push(seq);
    }
    Ok(RepresentationBatch { sequences })
}

/// Gaussian direction rescaled to exactly norm `n`: `b_u/||b_u|| * n`.
pub fn make_bias(rng: &mut RngStream, dim: usize, n: f64) -> Vec<f64> {
    assert!(n >= 0.0, "make_bias: norm must be >= 0");
    let raw = gaussian_vector(rng, dim);
    let norm = l2_norm(&raw);
    raw.iter().map(|v| v / norm * n).collect()
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

/// `x @ w + b` broadcast over rows.
fn affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    let mut out = x.matmul(w)?;
    out.add_row_vector(b)?;
    Ok(out)
}

fn layer_norm_rows(x: &Matrix, gamma: &[f64], beta: &[f64], eps: f64) -> Result<Matrix> {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let normed = layer_norm(x.row(i), gamma, beta, eps)?;
        out.row_mut(i).copy_from_slice(&normed);
    }
    Ok(out)
}

/// Forward pass for a single sequence; optionally captures per-head traces.
pub fn forward_sequence(
    params: &BlockParams,
    x: &Matrix,
    capture: bool,
) -> Result<(Matrix, Option<Vec<HeadTrace>>)> {
    if x.cols() != params.w_q.rows() {
        return Err(Error::ShapeMismatch {
            op: "forward",
            left: (x.rows(), x.cols()),
            right: (params.w_q.rows(), params.w_q.cols()),
        });
    }
    let (n_heads, d_head) = (params.n_heads, params.d_head);
    let scale = 1.0 / (d_head as f64).sqrt();

    let q = affine(x, &params.w_q, &params.b_q)?;
    let k = affine(x, &params.w_k, &params.b_k)?;
    let v = affine(x, &params.w_v, &params.b_v)?;

    let mut ctx = Matrix::zeros(x.rows(), x.cols());
    let mut traces = capture.then(|| Vec::with_capacity(n_heads));
    for h in 0..n_heads {
        let from = h * d_head;
        let q_h = q.col_slice(from, from + d_head);
        let k_h = k.col_slice(from, from + d_head);
        let v_h = v.col_slice(from, from + d_head);
        let logits = q_h.matmul(&k_h.transpose())?.scale(scale);
        let probs = softmax_rows(&logits)?;
        let ctx_h = probs.matmul(&v_h)?;
        ctx.set_col_slice(from, &ctx_h);
        if let Some(traces) = traces.as_mut() {
            traces.push(HeadTrace {
                q: q_h,
                k: k_h,
                logits,
                probs,
            });
        }
    }

    let attn = affine(&ctx, &params.w_o, &params.b_o)?;
    let h1 = layer_norm_rows(
        &x.add(&attn)?,
        &params.ln1_gamma,
        &params.ln1_beta,
        params.layernorm_eps,
    )?;
    if params.attention_only {
        return Ok((h1, traces));
    }
    let mut ff = affine(&h1, &params.w1, &params.b1)?;
    for i in 0..ff.rows() {
        let activated = crate::numerics::gelu(ff.row(i));
        ff.row_mut(i).copy_from_slice(&activated);
    }
    let ff = affine(&ff, &params.w2, &params.b2)?;
    let out = layer_norm_rows(
        &h1.add(&ff)?,
        &params.ln2_gamma,
        &params.ln2_beta,
        params.layernorm_eps,
    )?;
    Ok((out, traces))
}

/// Forward pass over a batch. Sequences run independently (in parallel with
/// the `parallel` feature); outputs and traces are assembled in sequence
/// order, so results are schedule-independent. Capture does not change the
/// output batch.
pub fn forward(
    params: &BlockParams,
    batch: &RepresentationBatch,
    capture: bool,
) -> Result<(RepresentationBatch, Option<AttentionTrace>)> {
    if batch.sequences.is_empty() {
        return Err(Error::EmptyInput("forward: batch"));
    }
    let results: Vec<Result<(Matrix, Option<Vec<HeadTrace>>)>> =
        exec::map_indexed(batch.sequences.len(), |s| {
            forward_sequence(params, &batch.sequences[s], capture)
        });
    let mut sequences = Vec::with_capacity(results.len());
    let mut per_sequence = Vec::with_capacity(results.len());
    for r in results {
        let (out, tr) = r?;
        sequences.push(out);
        if let Some(tr) = tr {
            per_sequence.push(tr);
        }
    }
    let trace = capture.then(|| AttentionTrace {
        n_heads: params.n_heads,
        d_head: params.d_head,
        seq_len: batch.seq_len(),
        per_sequence,
    });
    Ok((RepresentationBatch { sequences }, trace))
}

/// Query and key projections only (the attention front end), per sequence.
/// Used by drift checks that do not need the rest of the block.
pub fn project_qk(params: &BlockParams, batch: &RepresentationBatch) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
    let results: Vec<Result<(Matrix, Matrix)>> = exec::map_indexed(batch.sequences.len(), |s| {
        let x = &batch.sequences[s];
        Ok((
            affine(x, &params.w_q, &params.b_q)?,
            affine(x, &params.w_k, &params.b_k)?,
        ))
    });
    let mut qs = Vec::with_capacity(results.len());
    let mut ks = Vec::with_capacity(results.len());
    for r in results {
        let (q, k) = r?;
        qs.push(q);
        ks.push(k);
    }
    Ok((qs, ks))
}

// ===========================================================================
// Tests
// ===========================================================================
