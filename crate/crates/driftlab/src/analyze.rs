//! Per-layer anisotropy/drift analysis of an ingested hidden-state dump,
//! with the drift-correlation verdict over layers.

use crate::dump::HiddenStateDump;
use crate::error::{Error, Result};
use crate::metrics::{avg_pairwise_cosine, drift_norm};
use crate::numerics::RngStream;
use crate::stats::{drift_correlation, DriftCorrelation, DriftVerdict};

/// Measurements for one layer of a dump.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub layer: usize,
    pub mean_cosine: f64,
    pub stderr: f64,
    pub drift_norm: f64,
}

/// Full analysis: per-layer reports plus the drift correlation when at
/// least three layers are present.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub layers: Vec<LayerReport>,
    pub correlation: Option<DriftCorrelation>,
}

impl AnalysisReport {
    /// Verdict from the Spearman p-value at the 0.05 threshold.
    pub fn verdict(&self) -> Option<DriftVerdict> {
        self.correlation
            .as_ref()
            .map(|c| DriftVerdict::from_p(c.spearman.p_value))
    }
}

/// Analyze a dump: per layer, the sampled mean pairwise cosine (sub-stream
/// = layer index of `seed`) and the drift norm; across layers, both
/// correlation tests when there are at least three layers.
pub fn analyze_dump(dump: &HiddenStateDump, n_pairs: usize, seed: u64) -> Result<AnalysisReport> {
    if dump.layers.is_empty() {
        return Err(Error::EmptyInput("analyze: dump has no layers"));
    }
    let mut layers = Vec::with_capacity(dump.n_layers());
    for (idx, layer) in dump.layers.iter().enumerate() {
        if layer.n_vectors() < 2 {
            return Err(Error::InsufficientData {
                what: "analyze: vectors per layer",
                needed: 2,
                got: layer.n_vectors() as usize,
            });
        }
        let vectors = layer.vectors_f64();
        let refs: Vec<&[f64]> = vectors.iter().map(Vec::as_slice).collect();
        let mut rng = RngStream::with_stream(seed, idx as u64);
        let est = avg_pairwise_cosine(&refs, n_pairs, &mut rng)?;
        layers.push(LayerReport {
            layer: idx,
            mean_cosine: est.mean_cosine,
            stderr: est.stderr,
            drift_norm: drift_norm(&refs)?,
        });
    }
    let correlation = if layers.len() >= 3 {
        let series: Vec<(f64, f64)> = layers
            .iter()
            .map(|l| (l.drift_norm, l.mean_cosine))
            .collect();
        Some(drift_correlation(&series)?)
    } else {
        None
    };
    Ok(AnalysisReport {
        layers,
        correlation,
    })
}

// ===========================================================================
// Tests
// ===========================================================================
