//! CSV and manifest emission. All output is plain text with a fixed field
//! order; floats use Rust's shortest round-trip formatting, so reruns with
//! the same seed produce byte-identical files.

use crate::analyze::AnalysisReport;
use crate::block::BlockConfig;
use crate::error::Result;
use crate::experiments::SweepRecord;
use crate::numerics::RngStream;
use crate::stats::SIGNIFICANCE_LEVEL;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

/// Exact sweep CSV column set, one row per grid point.
pub const SWEEP_CSV_HEADER: &str = "N,input_cos,input_cos_se,output_cos,output_cos_se,input_norm,output_norm,att_max,att_median,att_min,seq_max,seq_min,q_norm,k_norm,presoftmax_std";

pub fn sweep_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.bias_norm,
            r.input_cosine.mean_cosine,
            r.input_cosine.stderr,
            r.output_cosine.mean_cosine,
            r.output_cosine.stderr,
            r.input_mean_norm,
            r.output_mean_norm,
            r.softmax.avg_max,
            r.softmax.avg_median,
            r.softmax.avg_min,
            r.softmax.seq_max,
            r.softmax.seq_min,
            r.qk.mean_q_norm,
            r.qk.mean_k_norm,
            r.presoftmax_std,
        );
    }
    out
}

/// Long-form pre-softmax histograms: one row per (grid point, bin).
pub fn histograms_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from("N,bin_lo,bin_hi,count\n");
    for r in records {
        let h = &r.presoftmax_histogram;
        for (i, count) in h.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", r.bias_norm, h.edges[i], h.edges[i + 1], count);
        }
    }
    out
}

/// Cross-direction aggregates in wide form: N, direction count, then
/// mean/std column pairs for every scalar metric.
pub fn directions_csv(aggregates: &[crate::experiments::DirectionAggregate]) -> String {
    use crate::experiments::SweepScalars;
    let mut out = String::from("N,directions");
    for field in SweepScalars::FIELDS {
        let _ = write!(out, ",{field}_mean,{field}_std");
    }
    out.push('\n');
    for a in aggregates {
        let _ = write!(out, "{},{}", a.bias_norm, a.n_directions);
        for (m, s) in a.mean.values().iter().zip(a.std.values()) {
            let _ = write!(out, ",{m},{s}");
        }
        out.push('\n');
    }
    out
}

pub fn layers_csv(report: &AnalysisReport) -> String {
    let mut out = String::from("layer,mean_cosine,stderr,drift_norm\n");
    for l in &report.layers {
        let _ = writeln!(out, "{},{},{},{}", l.layer, l.mean_cosine, l.stderr, l.drift_norm);
    }
    out
}

/// Correlation summary as key: value lines.
pub fn correlation_txt(report: &AnalysisReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n_layers: {}", report.layers.len());
    match &report.correlation {
        Some(c) => {
            let _ = writeln!(out, "spearman_rho: {}", c.spearman.coefficient);
            let _ = writeln!(out, "spearman_p: {}", c.spearman.p_value);
            let _ = writeln!(out, "spearman_p_method: {}", c.spearman.p_method.label());
            let _ = writeln!(out, "pearson_r: {}", c.pearson.coefficient);
            let _ = writeln!(out, "pearson_p: {}", c.pearson.p_value);
            let _ = writeln!(out, "pearson_p_method: {}", c.pearson.p_method.label());
            let _ = writeln!(out, "significance_level: {}", SIGNIFICANCE_LEVEL);
            let _ = writeln!(
                out,
                "verdict: {}",
                report.verdict().expect("correlation present").label()
            );
        }
        None => {
            let _ = writeln!(out, "correlation: skipped (need at least 3 layers)");
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// Everything needed to regenerate a run's output files bit-exactly.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub master_seed: u64,
    pub n_pairs: usize,
    pub n_directions: usize,
    pub grid: Option<Vec<f64>>,
    pub config: Option<BlockConfig>,
    pub dump_path: Option<String>,
    pub outputs: Vec<String>,
    pub timestamp_unix: u64,
}

/// Wall-clock seconds, overridable through `SOURCE_DATE_EPOCH` for
/// byte-identical reruns (the reproducible-builds convention).
pub fn manifest_timestamp() -> u64 {
    if let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(v) = epoch.trim().parse::<u64>() {
            return v;
        }
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n");
        let _ = writeln!(out, "  \"tool\": \"driftlab\",");
        let _ = writeln!(out, "  \"version\": \"{}\",", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "  \"command\": \"{}\",", json_escape(&self.command));
        let _ = writeln!(out, "  \"master_seed\": {},", self.master_seed);
        let _ = writeln!(out, "  \"n_pairs\": {},", self.n_pairs);
        let _ = writeln!(out, "  \"n_directions\": {},", self.n_directions);
        let _ = writeln!(out, "  \"rng_algorithm\": \"{}\",", RngStream::ALGORITHM);
        if let Some(grid) = &self.grid {
            let items: Vec<String> = grid.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "  \"grid\": [{}],", items.join(", "));
        }
        if let Some(cfg) = &self.config {
            let _ = writeln!(out, "  \"config\": {{");
            let _ = writeln!(out, "    \"d_model\": {},", cfg.d_model);
            let _ = writeln!(out, "    \"n_heads\": {},", cfg.n_heads);
            let _ = writeln!(out, "    \"d_ff\": {},", cfg.d_ff);
            let _ = writeln!(out, "    \"vocab_size\": {},", cfg.vocab_size);
            let _ = writeln!(out, "    \"seq_len\": {},", cfg.seq_len);
            let _ = writeln!(out, "    \"n_sequences\": {},", cfg.n_sequences);
            let _ = writeln!(out, "    \"layernorm_eps\": {},", cfg.layernorm_eps);
            let _ = writeln!(out, "    \"init_std\": {},", cfg.init_std);
            let _ = writeln!(out, "    \"attention_only\": {},", cfg.attention_only);
            let _ = writeln!(out, "    \"positional\": {}", cfg.positional);
            let _ = writeln!(out, "  }},");
        }
        if let Some(path) = &self.dump_path {
            let _ = writeln!(out, "  \"dump\": \"{}\",", json_escape(path));
        }
        let outputs: Vec<String> = self
            .outputs
            .iter()
            .map(|o| format!("\"{}\"", json_escape(o)))
            .collect();
        let _ = writeln!(out, "  \"outputs\": [{}],", outputs.join(", "));
        let _ = writeln!(out, "  \"histogram_bins\": {},", crate::numerics::DEFAULT_HISTOGRAM_BINS);
        let _ = writeln!(out, "  \"timestamp_unix\": {}", self.timestamp_unix);
        out.push('}');
        out.push('\n');
        out
    }
}

pub fn write_text(path: impl AsRef<Path>, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    Ok(())
}

// ===========================================================================
// Tests
// ===========================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::BlockConfig;
    use crate::experiments::run_sweep;

    fn tiny_records() -> Vec<SweepRecord> {
        let cfg = BlockConfig {
            d_model: 32,
            n_heads: 2,
            d_ff: 64,
            vocab_size: 20,
            seq_len: 8,
            n_sequences: 2,
            ..BlockConfig::default()
        };
        run_sweep(&cfg, &[0.0, 1.0], 4, 50).unwrap()
    }

    #[test]
    fn sweep_csv_has_exact_header_and_row_count() {
        let csv = sweep_csv(&tiny_records());
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), SWEEP_CSV_HEADER);
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn histogram_csv_counts_match_records() {
        let records = tiny_records();
        let csv = histograms_csv(&records);
        let rows = csv.lines().count() - 1;
        let expected: usize = records
            .iter()
            .map(|r| r.presoftmax_histogram.counts.len())
            .sum();
        assert_eq!(rows, expected);
    }

    #[test]
    fn directions_csv_shape() {
        let cfg = BlockConfig {
            d_model: 32,
            n_heads: 2,
            d_ff: 64,
            vocab_size: 20,
            seq_len: 8,
            n_sequences: 2,
            ..BlockConfig::default()
        };
        let per_direction =
            crate::experiments::run_sweep_directions(&cfg, &[0.0, 2.0], 4, 50, 3).unwrap();
        let agg = crate::experiments::aggregate_directions(&per_direction).unwrap();
        let csv = directions_csv(&agg);
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("N,directions,input_cos_mean,input_cos_std"));
        assert_eq!(header.split(',').count(), 2 + 12 * 2);
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn manifest_is_deterministic_under_pinned_epoch() {
        let manifest = RunManifest {
            command: "sweep".to_string(),
            master_seed: 7,
            n_pairs: 100,
            n_directions: 1,
            grid: Some(vec![0.0, 1.0]),
            config: Some(BlockConfig::default()),
            dump_path: None,
            outputs: vec!["sweep.csv".to_string()],
            timestamp_unix: 1000,
        };
        assert_eq!(manifest.to_json(), manifest.to_json());
        assert!(manifest.to_json().contains("\"master_seed\": 7"));
        assert!(manifest.to_json().contains("\"timestamp_unix\": 1000"));
    }

    #[test]
    fn json_escaping_handles_quotes_and_control() {
        assert_eq!(json_escape("a\"b\\c\nd"), "a\\\"b\\\\c\\nd");
    }
}
