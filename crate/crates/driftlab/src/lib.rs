//! driftlab: a deterministic numerical laboratory for studying anisotropy
//! and representation drift in transformer-block hidden states.
//!
//! The crate builds one BERT-base-style encoder block at truncated-normal
//! initialization, feeds it embedding sequences shifted by a controlled
//! bias vector, and measures how representation geometry responds: average
//! pairwise cosine (anisotropy), input/output norms and their fixed point,
//! query/key drift, pre-softmax score spread, and softmax categoricalness.
//! A model-agnostic ingestion path analyzes hidden-state dumps from
//! external models layer by layer and tests whether their anisotropy is
//! explained by a common drift component.
//!
//! Everything is seed-deterministic: randomness flows through one ChaCha8
//! generator with explicit sub-stream derivation, and data-parallel loops
//! (rayon, behind the default `parallel` feature) assemble results in index
//! order, so the sequential fallback is bit-identical.

pub mod analyze;
pub mod block;
pub mod cli;
pub mod dump;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod metrics;
pub mod numerics;
pub mod report;
pub mod stats;

pub use analyze::{analyze_dump, AnalysisReport, LayerReport};
pub use block::{
    forward, init_params, make_bias, sample_inputs, AttentionTrace, BlockConfig, BlockParams,
    RepresentationBatch,
};
pub use dump::{read_dump, write_dump, HiddenStateDump, LayerDump};
pub use error::{Error, Result};
pub use experiments::{
    aggregate_directions, find_fixed_point, qk_drift_check, run_sweep, run_sweep_directions,
    DirectionAggregate, Experiment, FixedPointResult, QkDriftReport, SweepRecord,
};
pub use metrics::{
    avg_pairwise_cosine, drift_norm, presoftmax_spread, qk_stats, softmax_stats,
    AnisotropyEstimate, QKStats, SoftmaxStats,
};
pub use numerics::{Histogram, Matrix, RngStream};
pub use stats::{
    drift_correlation, pearson, spearman, CorrelationResult, DriftCorrelation, DriftVerdict,
};
