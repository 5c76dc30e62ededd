use clap::{Args, Parser, Subcommand};
use driftlab::analyze::analyze_dump;
use driftlab::block::BlockConfig;
use driftlab::cli::{parse_bracket, parse_norm_grid, selftest};
use driftlab::dump::read_dump;
use driftlab::error::Error;
use driftlab::experiments::{
    aggregate_directions, find_fixed_point, qk_drift_check, run_sweep, run_sweep_directions,
};
use driftlab::report::{
    correlation_txt, directions_csv, histograms_csv, layers_csv, manifest_timestamp, sweep_csv,
    write_text, RunManifest,
};
use std::path::PathBuf;
use std::process::ExitCode;

/// Deterministic laboratory for transformer-block anisotropy and drift
/// experiments.
#[derive(Parser)]
#[command(name = "driftlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the bias-norm sweep and write sweep.csv, histograms.csv, and
    /// manifest.json.
    Sweep(SweepArgs),
    /// Bisect for the bias norm where mean input and output norms meet.
    FixedPoint(FixedPointArgs),
    /// Check the per-head query/key drift identity at one bias norm.
    QkCheck(QkCheckArgs),
    /// Analyze an HSD1 hidden-state dump layer by layer.
    Analyze(AnalyzeArgs),
    /// Run the invariant battery.
    Selftest,
}

#[derive(Args)]
struct ConfigArgs {
    /// Hidden size of the block.
    #[arg(long, default_value_t = 768)]
    d_model: usize,
    /// Number of attention heads.
    #[arg(long, default_value_t = 12)]
    n_heads: usize,
    /// Feed-forward inner size.
    #[arg(long, default_value_t = 3072)]
    d_ff: usize,
    /// Embedding table rows.
    #[arg(long, default_value_t = 30522)]
    vocab_size: usize,
    /// Positions per sequence.
    #[arg(long, default_value_t = 512)]
    seq_len: usize,
    /// Sequences per batch.
    #[arg(long = "n-seq", default_value_t = 16)]
    n_seq: usize,
    /// Skip the feed-forward sublayer.
    #[arg(long)]
    attention_only: bool,
    /// Add randomly initialized positional embeddings.
    #[arg(long)]
    positional: bool,
}

impl ConfigArgs {
    fn to_config(&self, seed: u64) -> BlockConfig {
        BlockConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            vocab_size: self.vocab_size,
            seq_len: self.seq_len,
            n_sequences: self.n_seq,
            seed,
            attention_only: self.attention_only,
            positional: self.positional,
            ..BlockConfig::default()
        }
    }
}

#[derive(Clone)]
struct GridSpec(Vec<f64>);

fn grid_arg(s: &str) -> Result<GridSpec, String> {
    parse_norm_grid(s).map(GridSpec)
}

#[derive(Clone)]
struct BracketSpec(f64, f64);

fn bracket_arg(s: &str) -> Result<BracketSpec, String> {
    parse_bracket(s).map(|(lo, hi)| BracketSpec(lo, hi))
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Bias-norm grid as lo:hi:steps (inclusive, linear).
    #[arg(long, default_value = "0:40:41", value_parser = grid_arg)]
    norms: GridSpec,
    /// Master seed for parameters, inputs, bias direction, and sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sampled pairs per anisotropy estimate.
    #[arg(long, default_value_t = 10_000)]
    pairs: usize,
    /// Independent bias directions; above 1, directions.csv aggregates
    /// mean +/- std across them (direction 0 still fills sweep.csv).
    #[arg(long, default_value_t = 1)]
    directions: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FixedPointArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Residual tolerance on |output_norm - input_norm|.
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
    /// Bisection bracket as lo:hi.
    #[arg(long, default_value = "1:100", value_parser = bracket_arg)]
    bracket: BracketSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct QkCheckArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Bias norm to check at.
    #[arg(long)]
    norm: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// HSD1 dump file.
    #[arg(long)]
    dump: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Error> {
    let config = args.config.to_config(args.seed);
    let norms = args.norms.0;
    std::fs::create_dir_all(&args.out)?;
    eprintln!(
        "sweep: {} grid points, {} direction(s), seed {}",
        norms.len(),
        args.directions,
        args.seed
    );
    let mut outputs = vec!["sweep.csv".to_string(), "histograms.csv".to_string()];
    let records = if args.directions > 1 {
        let per_direction =
            run_sweep_directions(&config, &norms, args.seed, args.pairs, args.directions)?;
        let aggregates = aggregate_directions(&per_direction)?;
        write_text(args.out.join("directions.csv"), &directions_csv(&aggregates))?;
        outputs.push("directions.csv".to_string());
        per_direction.into_iter().next().expect("direction 0")
    } else {
        run_sweep(&config, &norms, args.seed, args.pairs)?
    };
    let manifest = RunManifest {
        command: "sweep".to_string(),
        master_seed: args.seed,
        n_pairs: args.pairs,
        n_directions: args.directions,
        grid: Some(norms),
        config: Some(config),
        dump_path: None,
        outputs: outputs.clone(),
        timestamp_unix: manifest_timestamp(),
    };
    write_text(args.out.join("sweep.csv"), &sweep_csv(&records))?;
    write_text(args.out.join("histograms.csv"), &histograms_csv(&records))?;
    write_text(args.out.join("manifest.json"), &manifest.to_json())?;
    println!(
        "wrote {}, manifest.json to {}",
        outputs.join(", "),
        args.out.display()
    );
    Ok(())
}

fn cmd_fixed_point(args: FixedPointArgs) -> Result<(), Error> {
    let config = args.config.to_config(args.seed);
    let result = find_fixed_point(&config, args.tol, (args.bracket.0, args.bracket.1), args.seed)?;
    println!("n_star: {}", result.n_star);
    println!("residual: {}", result.residual);
    println!("iterations: {}", result.iterations);
    println!("bracket: [{}, {}]", result.bracket.0, result.bracket.1);
    Ok(())
}

fn cmd_qk_check(args: QkCheckArgs) -> Result<(), Error> {
    if !(args.norm.is_finite() && args.norm >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "norm",
            message: format!("must be finite and >= 0, got {}", args.norm),
        });
    }
    let config = args.config.to_config(args.seed);
    let report = qk_drift_check(&config, args.norm, args.seed)?;
    for h in &report.per_head {
        println!(
            "head {}: q_residual={} k_residual={}",
            h.head, h.q_residual, h.k_residual
        );
    }
    println!("mean_q_norm: {}", report.mean_q_norm);
    println!("mean_k_norm: {}", report.mean_k_norm);
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), Error> {
    let dump = read_dump(&args.dump)?;
    let report = analyze_dump(&dump, args.pairs, args.seed)?;
    std::fs::create_dir_all(&args.out)?;
    let manifest = RunManifest {
        command: "analyze".to_string(),
        master_seed: args.seed,
        n_pairs: args.pairs,
        n_directions: 1,
        grid: None,
        config: None,
        dump_path: Some(args.dump.display().to_string()),
        outputs: vec!["layers.csv".to_string(), "correlation.txt".to_string()],
        timestamp_unix: manifest_timestamp(),
    };
    write_text(args.out.join("layers.csv"), &layers_csv(&report))?;
    write_text(args.out.join("correlation.txt"), &correlation_txt(&report))?;
    write_text(args.out.join("manifest.json"), &manifest.to_json())?;
    print!("{}", correlation_txt(&report));
    println!("wrote layers.csv, correlation.txt, manifest.json to {}", args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Sweep(args) => cmd_sweep(args),
        Command::FixedPoint(args) => cmd_fixed_point(args),
        Command::QkCheck(args) => cmd_qk_check(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Selftest => {
            let failures = selftest(std::io::stdout());
            if failures > 0 {
                return Err(Error::InvalidParameter {
                    name: "selftest",
                    message: format!("{failures} check(s) failed"),
                });
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    return ExitCode::SUCCESS;
                }
                _ => {
                    // usage text + exit 1 on bad flags
                    eprint!("{e}");
                    return ExitCode::from(1);
                }
            }
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
