//! CLI support: grid/bracket argument parsing and the `selftest` battery.

use crate::block::{forward, init_params, make_bias, sample_inputs, BlockConfig};
use crate::dump::{dump_from_bytes, dump_to_bytes, HiddenStateDump, LayerDump};
use crate::error::Result;
use crate::experiments::{qk_drift_check, run_sweep};
use crate::numerics::{cosine, gaussian_vector, l2_norm, softmax_rows, Matrix, RngStream};
use crate::stats::{pearson, spearman, PMethod};

/// Parse `lo:hi:steps` into an inclusive linear grid.
pub fn parse_norm_grid(spec: &str) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected lo:hi:steps, got {spec:?}"));
    }
    let lo: f64 = parts[0].parse().map_err(|_| format!("bad lo {:?}", parts[0]))?;
    let hi: f64 = parts[1].parse().map_err(|_| format!("bad hi {:?}", parts[1]))?;
    let steps: usize = parts[2]
        .parse()
        .map_err(|_| format!("bad steps {:?}", parts[2]))?;
    if steps == 0 {
        return Err("steps must be >= 1".to_string());
    }
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo) {
        return Err(format!("need finite 0 <= lo <= hi, got {lo}:{hi}"));
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect())
}

/// Parse `lo:hi` into a bracket.
pub fn parse_bracket(spec: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 2 {
        return Err(format!("expected lo:hi, got {spec:?}"));
    }
    let lo: f64 = parts[0].parse().map_err(|_| format!("bad lo {:?}", parts[0]))?;
    let hi: f64 = parts[1].parse().map_err(|_| format!("bad hi {:?}", parts[1]))?;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
        return Err(format!("need finite 0 <= lo < hi, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

// ---------------------------------------------------------------------------
// Selftest
// ---------------------------------------------------------------------------

type Check = (&'static str, fn() -> std::result::Result<(), String>);

fn tiny_config() -> BlockConfig {
    BlockConfig {
        d_model: 32,
        n_heads: 4,
        d_ff: 64,
        vocab_size: 24,
        seq_len: 10,
        n_sequences: 3,
        seed: 1,
        ..BlockConfig::default()
    }
}

fn check<T: PartialEq + std::fmt::Debug>(
    what: &str,
    got: T,
    want: T,
) -> std::result::Result<(), String> {
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: got {got:?}, want {want:?}"))
    }
}

fn expect(cond: bool, what: &str) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.to_string())
    }
}

fn run_check<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn selftest_matmul() -> std::result::Result<(), String> {
    let mut rng = RngStream::new(1);
    let m = |rng: &mut RngStream| Matrix::new(5, 5, gaussian_vector(rng, 25)).unwrap();
    let (a, b, c) = (m(&mut rng), m(&mut rng), m(&mut rng));
    let left = run_check(run_check(a.matmul(&b))?.matmul(&c))?;
    let right = run_check(a.matmul(&run_check(b.matmul(&c))?))?;
    for (x, y) in left.data().iter().zip(right.data()) {
        let scale = x.abs().max(1.0);
        expect((x - y).abs() / scale < 1e-9, "matmul associativity")?;
    }
    Ok(())
}

fn selftest_softmax() -> std::result::Result<(), String> {
    let m = Matrix::from_rows(&[vec![1e4, 0.0, -1e4], vec![0.0, 0.0, 0.0]]).unwrap();
    let s = run_check(softmax_rows(&m))?;
    for i in 0..s.rows() {
        let sum: f64 = s.row(i).iter().sum();
        expect((sum - 1.0).abs() <= 1e-12, "softmax row sum")?;
    }
    Ok(())
}

fn selftest_cosine_scale_invariance() -> std::result::Result<(), String> {
    let mut rng = RngStream::new(2);
    let u = gaussian_vector(&mut rng, 12);
    let v = gaussian_vector(&mut rng, 12);
    let su: Vec<f64> = u.iter().map(|x| x * 3.7).collect();
    let sv: Vec<f64> = v.iter().map(|x| x * 0.2).collect();
    let c0 = run_check(cosine(&u, &v))?;
    let c1 = run_check(cosine(&su, &sv))?;
    expect((c0 - c1).abs() <= 1e-12, "cosine scale invariance")
}

fn selftest_rng_determinism() -> std::result::Result<(), String> {
    let a = gaussian_vector(&mut RngStream::new(9), 32);
    let b = gaussian_vector(&mut RngStream::new(9), 32);
    check("rng determinism", a, b)
}

fn selftest_make_bias() -> std::result::Result<(), String> {
    let b = make_bias(&mut RngStream::new(3), 16, 5.0);
    expect((l2_norm(&b) - 5.0).abs() <= 1e-12, "bias norm")
}

fn selftest_qk_drift_identity() -> std::result::Result<(), String> {
    let report = run_check(qk_drift_check(&tiny_config(), 4.0, 5))?;
    for h in &report.per_head {
        expect(
            h.q_residual <= 1e-9 && h.k_residual <= 1e-9,
            "qk drift residual",
        )?;
    }
    Ok(())
}

fn selftest_capture_identity() -> std::result::Result<(), String> {
    let cfg = tiny_config();
    let p = run_check(init_params(&cfg))?;
    let batch = run_check(sample_inputs(&p, &cfg, &mut RngStream::new(6)))?;
    let (plain, _) = run_check(forward(&p, &batch, false))?;
    let (captured, _) = run_check(forward(&p, &batch, true))?;
    check("capture on/off outputs", plain, captured)
}

fn selftest_permutation_equivariance() -> std::result::Result<(), String> {
    let cfg = tiny_config();
    let p = run_check(init_params(&cfg))?;
    let batch = run_check(sample_inputs(&p, &cfg, &mut RngStream::new(7)))?;
    let (out, _) = run_check(forward(&p, &batch, false))?;
    let reversed = crate::block::RepresentationBatch {
        sequences: batch
            .sequences
            .iter()
            .map(|seq| {
                let rows: Vec<Vec<f64>> =
                    (0..seq.rows()).rev().map(|i| seq.row(i).to_vec()).collect();
                Matrix::from_rows(&rows).unwrap()
            })
            .collect(),
    };
    let (out_r, _) = run_check(forward(&p, &reversed, false))?;
    for (a, b) in out.sequences.iter().zip(&out_r.sequences) {
        for i in 0..a.rows() {
            let rev = b.row(a.rows() - 1 - i);
            if a.row(i).iter().zip(rev).any(|(x, y)| (x - y).abs() > 1e-9) {
                return Err("permutation equivariance".to_string());
            }
        }
    }
    Ok(())
}

fn selftest_correlation() -> std::result::Result<(), String> {
    let r = run_check(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]))?;
    check("pearson perfect r", r.coefficient, 1.0)?;
    check("pearson perfect p", r.p_value, 0.0)?;
    let s = run_check(spearman(
        &[1.0, 2.0, 3.0, 4.0, 5.0],
        &[1.0, 2.0, 3.0, 5.0, 4.0],
    ))?;
    expect((s.coefficient - 0.9).abs() < 1e-12, "spearman rho 0.9")?;
    check("spearman p method", s.p_method, PMethod::ExactPermutation)
}

fn selftest_dump_round_trip() -> std::result::Result<(), String> {
    let dump = HiddenStateDump {
        layers: vec![
            LayerDump::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).map_err(|e| e.to_string())?,
            LayerDump::new(3, vec![vec![0.5, -0.5, 2.0]]).map_err(|e| e.to_string())?,
        ],
    };
    let bytes = dump_to_bytes(&dump);
    let parsed = run_check(dump_from_bytes(&bytes))?;
    check("dump round trip", parsed, dump)
}

fn selftest_sweep_determinism() -> std::result::Result<(), String> {
    let cfg = tiny_config();
    let a = run_check(run_sweep(&cfg, &[0.0, 2.0], 8, 60))?;
    let b = run_check(run_sweep(&cfg, &[0.0, 2.0], 8, 60))?;
    check("sweep determinism", a, b)
}

/// Invariant battery behind the `selftest` subcommand. Returns the failure
/// count; prints one line per check.
pub fn selftest(mut log: impl std::io::Write) -> usize {
    let checks: &[Check] = &[
        ("matmul associativity", selftest_matmul),
        ("softmax row normalization", selftest_softmax),
        ("cosine scale invariance", selftest_cosine_scale_invariance),
        ("rng determinism", selftest_rng_determinism),
        ("bias construction", selftest_make_bias),
        ("qk drift identity", selftest_qk_drift_identity),
        ("capture transparency", selftest_capture_identity),
        ("permutation equivariance", selftest_permutation_equivariance),
        ("correlation statistics", selftest_correlation),
        ("dump round trip", selftest_dump_round_trip),
        ("sweep determinism", selftest_sweep_determinism),
    ];
    let mut failures = 0;
    for (name, f) in checks {
        match f() {
            Ok(()) => {
                let _ = writeln!(log, "ok   {name}");
            }
            Err(msg) => {
                failures += 1;
                let _ = writeln!(log, "FAIL {name}: {msg}");
            }
        }
    }
    failures
}

// ===========================================================================
// Tests
// ===========================================================================
