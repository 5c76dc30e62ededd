//! Experiment drivers: the bias-norm sweep, the input/output norm fixed
//! point, and the query/key drift identity check.
//!
//! All drivers freeze parameters, the input batch, and the bias direction
//! once per master seed (sub-streams 0..2), so curves over the bias norm
//! are comparable across grid points and bisection evaluates a
//! deterministic function. Per-grid-point metric sampling uses dedicated
//! sub-streams above [`METRICS_STREAM_BASE`].

use crate::block::{
    forward, init_params, make_bias, project_qk, sample_inputs, BlockConfig, BlockParams,
    RepresentationBatch, BIAS_STREAM, INPUTS_STREAM, METRICS_STREAM_BASE,
};
use crate::error::{Error, Result};
use crate::metrics::{
    avg_pairwise_cosine, presoftmax_spread, qk_stats, softmax_stats, AnisotropyEstimate,
    QKStats, SoftmaxStats,
};
use crate::numerics::{l2_norm, mean_vector, Histogram, Matrix, RngStream};

/// Metric sub-streams consumed per grid point.
const STREAMS_PER_GRID_POINT: u64 = 4;

/// In multi-direction mode the direction index occupies the upper 32 bits
/// of every derived stream index, so direction 0 reproduces the
/// single-direction sweep bit for bit.
const DIRECTION_STREAM_SHIFT: u32 = 32;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// All measurements at one bias-norm level.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub bias_norm: f64,
    pub input_cosine: AnisotropyEstimate,
    pub output_cosine: AnisotropyEstimate,
    /// Mean L2 norm of `x_i + b` over all positions and sequences.
    pub input_mean_norm: f64,
    /// Mean L2 norm of the block outputs over all positions and sequences.
    pub output_mean_norm: f64,
    pub softmax: SoftmaxStats,
    pub qk: QKStats,
    pub presoftmax_mean: f64,
    pub presoftmax_std: f64,
    pub presoftmax_histogram: Histogram,
}

/// Root of `g(N) = output_mean_norm(N) - input_mean_norm(N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub n_star: f64,
    pub residual: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
}

/// Relative drift residuals of one attention head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadResidual {
    pub head: usize,
    pub q_residual: f64,
    pub k_residual: f64,
}

/// Per-head drift identity residuals plus pooled query/key row norms.
#[derive(Debug, Clone, PartialEq)]
pub struct QkDriftReport {
    pub per_head: Vec<HeadResidual>,
    pub mean_q_norm: f64,
    pub mean_k_norm: f64,
}

// ---------------------------------------------------------------------------
// Shared setup
// ---------------------------------------------------------------------------

/// Frozen experiment material: parameters, inputs, and the unit bias
/// direction, all derived from one master seed.
pub struct Experiment {
    pub config: BlockConfig,
    pub params: BlockParams,
    pub inputs: RepresentationBatch,
    pub bias_direction: Vec<f64>,
}

impl Experiment {
    /// Sample parameters, inputs, and the bias direction from `master_seed`
    /// (the config's own seed field is superseded).
    pub fn prepare(config: &BlockConfig, master_seed: u64) -> Result<Experiment> {
        let mut config = config.clone();
        config.seed = master_seed;
        config.validate()?;
        let params = init_params(&config)?;
        let mut input_rng = RngStream::with_stream(master_seed, INPUTS_STREAM);
        let inputs = sample_inputs(&params, &config, &mut input_rng)?;
        let mut bias_rng = RngStream::with_stream(master_seed, BIAS_STREAM);
        let bias_direction = make_bias(&mut bias_rng, config.d_model, 1.0);
        Ok(Experiment {
            config,
            params,
            inputs,
            bias_direction,
        })
    }

    /// Input batch shifted by the frozen direction rescaled to norm `n`.
    pub fn biased_inputs(&self, n: f64) -> Result<RepresentationBatch> {
        let bias: Vec<f64> = self.bias_direction.iter().map(|v| v * n).collect();
        self.inputs.with_bias(&bias)
    }
}

// ---------------------------------------------------------------------------
// Bias-norm sweep
// ---------------------------------------------------------------------------

/// Run the full measurement battery at every bias norm in `norms`.
pub fn run_sweep(
    config: &BlockConfig,
    norms: &[f64],
    master_seed: u64,
    n_pairs: usize,
) -> Result<Vec<SweepRecord>> {
    let mut per_direction = run_sweep_directions(config, norms, master_seed, n_pairs, 1)?;
    Ok(per_direction.pop().expect("one direction"))
}

/// Sweep with `n_directions` independent bias directions over the same
/// frozen parameters and inputs. Direction `d` draws its direction from
/// stream `(d << 32) | BIAS_STREAM`, so direction 0 is bit-identical to
/// [`run_sweep`]. Returns one record list per direction.
pub fn run_sweep_directions(
    config: &BlockConfig,
    norms: &[f64],
    master_seed: u64,
    n_pairs: usize,
    n_directions: usize,
) -> Result<Vec<Vec<SweepRecord>>> {
    if n_directions == 0 {
        return Err(Error::InvalidParameter {
            name: "n_directions",
            message: "must be >= 1".to_string(),
        });
    }
    if norms.is_empty() {
        return Err(Error::EmptyInput("run_sweep: norms"));
    }
    if let Some(bad) = norms.iter().find(|n| !n.is_finite() || **n < 0.0) {
        return Err(Error::InvalidParameter {
            name: "norms",
            message: format!("bias norms must be finite and >= 0, got {bad}"),
        });
    }
    let mut exp = Experiment::prepare(config, master_seed)?;
    let mut per_direction = Vec::with_capacity(n_directions);
    for d in 0..n_directions as u64 {
        let direction_bit = d << DIRECTION_STREAM_SHIFT;
        let mut bias_rng = RngStream::with_stream(master_seed, direction_bit | BIAS_STREAM);
        exp.bias_direction = make_bias(&mut bias_rng, exp.config.d_model, 1.0);
        let mut records = Vec::with_capacity(norms.len());
        for (grid_idx, &n) in norms.iter().enumerate() {
            records.push(sweep_point(&exp, d, grid_idx as u64, n, master_seed, n_pairs)?);
        }
        per_direction.push(records);
    }
    Ok(per_direction)
}

fn sweep_point(
    exp: &Experiment,
    direction: u64,
    grid_idx: u64,
    n: f64,
    master_seed: u64,
    n_pairs: usize,
) -> Result<SweepRecord> {
    let batch = exp.biased_inputs(n)?;
    let (out, trace) = forward(&exp.params, &batch, true)?;
    let trace = trace.expect("capture requested");

    let stream_base = (direction << DIRECTION_STREAM_SHIFT)
        | (METRICS_STREAM_BASE + STREAMS_PER_GRID_POINT * grid_idx);
    let input_rows = batch.pooled_rows();
    let output_rows = out.pooled_rows();
    let input_cosine = avg_pairwise_cosine(
        &input_rows,
        n_pairs,
        &mut RngStream::with_stream(master_seed, stream_base),
    )?;
    let output_cosine = avg_pairwise_cosine(
        &output_rows,
        n_pairs,
        &mut RngStream::with_stream(master_seed, stream_base + 1),
    )?;
    let qk = qk_stats(
        &trace,
        n_pairs,
        &mut RngStream::with_stream(master_seed, stream_base + 2),
    )?;
    let softmax = softmax_stats(&trace);
    let spread = presoftmax_spread(&trace)?;

    Ok(SweepRecord {
        bias_norm: n,
        input_cosine,
        output_cosine,
        input_mean_norm: batch.mean_row_norm(),
        output_mean_norm: out.mean_row_norm(),
        softmax,
        qk,
        presoftmax_mean: spread.mean,
        presoftmax_std: spread.std,
        presoftmax_histogram: spread.histogram,
    })
}

// ---------------------------------------------------------------------------
// Cross-direction aggregation
// ---------------------------------------------------------------------------

/// Scalar projections of a sweep record, used for aggregating over bias
/// directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepScalars {
    pub input_cos: f64,
    pub output_cos: f64,
    pub input_norm: f64,
    pub output_norm: f64,
    pub att_max: f64,
    pub att_median: f64,
    pub att_min: f64,
    pub seq_max: f64,
    pub seq_min: f64,
    pub q_norm: f64,
    pub k_norm: f64,
    pub presoftmax_std: f64,
}

impl SweepScalars {
    pub const FIELDS: [&'static str; 12] = [
        "input_cos",
        "output_cos",
        "input_norm",
        "output_norm",
        "att_max",
        "att_median",
        "att_min",
        "seq_max",
        "seq_min",
        "q_norm",
        "k_norm",
        "presoftmax_std",
    ];

    pub fn from_record(r: &SweepRecord) -> Self {
        SweepScalars {
            input_cos: r.input_cosine.mean_cosine,
            output_cos: r.output_cosine.mean_cosine,
            input_norm: r.input_mean_norm,
            output_norm: r.output_mean_norm,
            att_max: r.softmax.avg_max,
            att_median: r.softmax.avg_median,
            att_min: r.softmax.avg_min,
            seq_max: r.softmax.seq_max,
            seq_min: r.softmax.seq_min,
            q_norm: r.qk.mean_q_norm,
            k_norm: r.qk.mean_k_norm,
            presoftmax_std: r.presoftmax_std,
        }
    }

    pub fn values(&self) -> [f64; 12] {
        [
            self.input_cos,
            self.output_cos,
            self.input_norm,
            self.output_norm,
            self.att_max,
            self.att_median,
            self.att_min,
            self.seq_max,
            self.seq_min,
            self.q_norm,
            self.k_norm,
            self.presoftmax_std,
        ]
    }

    fn from_values(v: [f64; 12]) -> Self {
        SweepScalars {
            input_cos: v[0],
            output_cos: v[1],
            input_norm: v[2],
            output_norm: v[3],
            att_max: v[4],
            att_median: v[5],
            att_min: v[6],
            seq_max: v[7],
            seq_min: v[8],
            q_norm: v[9],
            k_norm: v[10],
            presoftmax_std: v[11],
        }
    }
}

/// Mean and sample standard deviation across bias directions at one grid
/// point.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionAggregate {
    pub bias_norm: f64,
    pub n_directions: usize,
    pub mean: SweepScalars,
    pub std: SweepScalars,
}

/// Aggregate per-direction sweeps (as returned by
/// [`run_sweep_directions`]) into mean +/- std per grid point.
pub fn aggregate_directions(per_direction: &[Vec<SweepRecord>]) -> Result<Vec<DirectionAggregate>> {
    let first = per_direction
        .first()
        .ok_or(Error::EmptyInput("aggregate_directions"))?;
    let n_points = first.len();
    if per_direction.iter().any(|d| d.len() != n_points) {
        return Err(Error::ShapeMismatch {
            op: "aggregate_directions",
            left: (per_direction.len(), n_points),
            right: (1, 0),
        });
    }
    let k = per_direction.len();
    let mut out = Vec::with_capacity(n_points);
    for g in 0..n_points {
        let samples: Vec<[f64; 12]> = per_direction
            .iter()
            .map(|d| SweepScalars::from_record(&d[g]).values())
            .collect();
        let mut mean = [0.0f64; 12];
        for s in &samples {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= k as f64;
        }
        let mut std = [0.0f64; 12];
        if k > 1 {
            for s in &samples {
                for ((acc, v), m) in std.iter_mut().zip(s).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
            for acc in std.iter_mut() {
                *acc = (*acc / (k - 1) as f64).sqrt();
            }
        }
        out.push(DirectionAggregate {
            bias_norm: first[g].bias_norm,
            n_directions: k,
            mean: SweepScalars::from_values(mean),
            std: SweepScalars::from_values(std),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Fixed point
// ---------------------------------------------------------------------------

/// Norm gap `g(N) = output_mean_norm - input_mean_norm` on fresh forward
/// passes over the frozen experiment material.
pub fn norm_gap(exp: &Experiment, n: f64) -> Result<f64> {
    let batch = exp.biased_inputs(n)?;
    let (out, _) = forward(&exp.params, &batch, false)?;
    Ok(out.mean_row_norm() - batch.mean_row_norm())
}

/// Bisect `g` over `bracket` until `|g| <= tolerance` or the bracket is
/// narrower than 1e-6.
pub fn find_fixed_point(
    config: &BlockConfig,
    tolerance: f64,
    bracket: (f64, f64),
    master_seed: u64,
) -> Result<FixedPointResult> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tolerance",
            message: format!("must be > 0, got {tolerance}"),
        });
    }
    let (mut lo, mut hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
        return Err(Error::InvalidParameter {
            name: "bracket",
            message: format!("need 0 <= lo < hi, got [{lo}, {hi}]"),
        });
    }
    let exp = Experiment::prepare(config, master_seed)?;
    let mut g_lo = norm_gap(&exp, lo)?;
    let g_hi = norm_gap(&exp, hi)?;
    if g_lo * g_hi >= 0.0 {
        return Err(Error::NoSignChange { g_lo, g_hi });
    }
    let mut iterations = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        let g_mid = norm_gap(&exp, mid)?;
        iterations += 1;
        if g_mid.abs() <= tolerance || (hi - lo) * 0.5 <= 1e-6 {
            return Ok(FixedPointResult {
                n_star: mid,
                residual: g_mid.abs(),
                bracket: (lo, hi),
                iterations,
            });
        }
        if g_lo * g_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            g_lo = g_mid;
        }
    }
}

/// Linearly interpolated zero crossing of `output_mean_norm -
/// input_mean_norm` over a sweep, if any.
pub fn interpolated_norm_crossing(records: &[SweepRecord]) -> Option<f64> {
    for pair in records.windows(2) {
        let ga = pair[0].output_mean_norm - pair[0].input_mean_norm;
        let gb = pair[1].output_mean_norm - pair[1].input_mean_norm;
        if ga > 0.0 && gb <= 0.0 {
            let t = ga / (ga - gb);
            return Some(pair[0].bias_norm + t * (pair[1].bias_norm - pair[0].bias_norm));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Query/key drift check
// ---------------------------------------------------------------------------

/// Per-head relative residuals of the drift identity: the sample mean of the
/// head's query rows against the affine image `W_Q x_bar + b_Q` of the mean
/// input (and likewise for keys).
pub fn qk_drift_check(
    config: &BlockConfig,
    bias_norm: f64,
    master_seed: u64,
) -> Result<QkDriftReport> {
    let exp = Experiment::prepare(config, master_seed)?;
    let batch = exp.biased_inputs(bias_norm)?;
    qk_drift_residuals(&exp.params, &batch, exp.config.n_heads, exp.config.d_head())
}

/// Residual computation over an explicit batch (shared by tests that
/// permute positions).
pub fn qk_drift_residuals(
    params: &BlockParams,
    batch: &RepresentationBatch,
    n_heads: usize,
    d_head: usize,
) -> Result<QkDriftReport> {
    const EPS: f64 = 1e-30;
    let (qs, ks) = project_qk(params, batch)?;

    let x_bar = mean_vector(&batch.pooled_rows())?;
    let x_bar_m = Matrix::new(1, x_bar.len(), x_bar)?;
    let mut expected_q = x_bar_m.matmul(&params.w_q)?;
    expected_q.add_row_vector(&params.b_q)?;
    let mut expected_k = x_bar_m.matmul(&params.w_k)?;
    expected_k.add_row_vector(&params.b_k)?;

    let q_rows: Vec<&[f64]> = qs.iter().flat_map(Matrix::row_iter).collect();
    let k_rows: Vec<&[f64]> = ks.iter().flat_map(Matrix::row_iter).collect();
    let mean_q = mean_vector(&q_rows)?;
    let mean_k = mean_vector(&k_rows)?;

    let relative_residual = |mean: &[f64], expected: &[f64]| {
        let diff: f64 = mean
            .iter()
            .zip(expected)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        diff / (l2_norm(expected) + EPS)
    };

    let per_head = (0..n_heads)
        .map(|h| {
            let cols = h * d_head..(h + 1) * d_head;
            HeadResidual {
                head: h,
                q_residual: relative_residual(&mean_q[cols.clone()], &expected_q.row(0)[cols.clone()]),
                k_residual: relative_residual(&mean_k[cols.clone()], &expected_k.row(0)[cols]),
            }
        })
        .collect();

    // mean norms over per-head rows, pooled across heads and sequences
    let mut q_norm_sum = 0.0;
    let mut k_norm_sum = 0.0;
    let mut count = 0usize;
    for (q, k) in qs.iter().zip(&ks) {
        for i in 0..q.rows() {
            for h in 0..n_heads {
                let cols = h * d_head..(h + 1) * d_head;
                q_norm_sum += l2_norm(&q.row(i)[cols.clone()]);
                k_norm_sum += l2_norm(&k.row(i)[cols]);
                count += 1;
            }
        }
    }
    Ok(QkDriftReport {
        per_head,
        mean_q_norm: q_norm_sum / count as f64,
        mean_k_norm: k_norm_sum / count as f64,
    })
}

// ===========================================================================
// Tests
// ===========================================================================
