use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use minent::analysis::{
    joint_range_curve, parameter_grid, variance_of_g, z_slope, Distribution, RangeStatistic,
};
use minent::estimators::{
    estimate_from_statistic, statistic_for, EstimateOptions, EstimatorKind, EstimatorSpec,
};
use minent::harness::{run_experiment, ExperimentConfig};
use minent::ingest::{pack_blocks, BitSequence, BlockReader};
use minent::online::OnlineState;
use minent::sources::{sample, true_min_entropy, SourceFamily, SourceSpec, RNG_NAME};
use minent::stats::CorrectiveFactor;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "minent", version, about = "Min-entropy estimation for bit sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the min-entropy of a bit file and print JSON.
    Estimate(EstimateArgs),
    /// Write a simulated source to a bit file plus a FILE.json sidecar.
    Simulate(SimulateArgs),
    /// Run an experiment config and write report CSVs.
    Evaluate(EvaluateArgs),
    /// Stream blocks through the online collision estimator.
    Online(OnlineArgs),
    /// Write analysis curves as CSV.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorName {
    Compression,
    Coron,
    Kim,
    Collision,
}

#[derive(Args)]
struct EstimateArgs {
    /// Bit file: packed bytes, or ASCII '0'/'1'.
    file: PathBuf,
    #[arg(long, value_enum)]
    estimator: EstimatorName,
    /// Order for the kim estimator.
    #[arg(long)]
    alpha: Option<f64>,
    /// Bits per block.
    #[arg(short = 'L', long = "L", default_value_t = 6)]
    bits_per_block: u32,
    /// Initialization blocks. Defaults depend on the estimator.
    #[arg(short = 'Q', long = "Q")]
    init_blocks: Option<usize>,
    /// Solve against the raw statistic instead of its lower confidence bound.
    #[arg(long)]
    no_ci: bool,
    /// Corrective factor override.
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BitFormat {
    Bin,
    Text,
}

#[derive(Args)]
struct SimulateArgs {
    /// Source such as bms:p=0.3, near_uniform:theta=0.5, markov:p=0.2.
    spec: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    blocks: usize,
    #[arg(short = 'L', long = "L", default_value_t = 6)]
    bits_per_block: u32,
    #[arg(long, value_enum, default_value_t = BitFormat::Bin)]
    format: BitFormat,
}

#[derive(Args)]
struct EvaluateArgs {
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OnlineArgs {
    /// Bit file, or - for stdin.
    input: String,
    /// Print a row every N blocks (the last block is always printed).
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    emit_every: u64,
    /// Print the positions of collisions to stderr at the end.
    #[arg(long)]
    track_indices: bool,
    #[arg(short = 'L', long = "L", default_value_t = 6)]
    bits_per_block: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatisticName {
    Maurer,
    Shannon,
    Renyi,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Lower and upper min-entropy over a statistic's range (x,h_lower,h_upper,gap).
    JointRange {
        #[arg(long, value_enum, default_value_t = StatisticName::Shannon)]
        statistic: StatisticName,
        /// Order for the renyi statistic.
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        #[arg(short = 'L', long = "L", default_value_t = 6)]
        bits_per_block: u32,
        #[arg(long, default_value_t = 10_000)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Slope z(theta, alpha) over theta in [1/B + delta, 1] (theta,alpha,z).
    Slope {
        /// Comma-separated orders.
        #[arg(long, value_delimiter = ',', default_values_t = [2.0, 3.0, 4.0, 5.0])]
        alpha: Vec<f64>,
        #[arg(long, default_value_t = 0.001)]
        delta: f64,
        #[arg(short = 'L', long = "L", default_value_t = 6)]
        bits_per_block: u32,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-term variance of g_K for near-uniform laws (theta,alpha,variance).
    Variance {
        #[arg(long, value_delimiter = ',', default_values_t = [2.0, 3.0, 4.0, 5.0])]
        alpha: Vec<f64>,
        #[arg(short = 'L', long = "L", default_value_t = 6)]
        bits_per_block: u32,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Online(args) => cmd_online(args),
        Command::Analyze(cmd) => cmd_analyze(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[derive(Serialize)]
struct EstimateOutput {
    estimator: &'static str,
    alpha: Option<f64>,
    bits_per_block: u32,
    init_blocks: usize,
    test_blocks: usize,
    statistic: f64,
    per_term_variance: f64,
    target: f64,
    theta: f64,
    per_block: f64,
    per_bit: f64,
    solved: bool,
    ci_applied: bool,
}

fn cmd_estimate(args: EstimateArgs) -> CliResult<()> {
    let kind = match (args.estimator, args.alpha) {
        (EstimatorName::Kim, Some(alpha)) => EstimatorKind::Kim { alpha },
        (EstimatorName::Kim, None) => return Err("--estimator kim needs --alpha".into()),
        (_, Some(_)) => return Err("--alpha only applies to --estimator kim".into()),
        (EstimatorName::Compression, None) => EstimatorKind::Compression,
        (EstimatorName::Coron, None) => EstimatorKind::Coron,
        (EstimatorName::Collision, None) => EstimatorKind::Collision,
    };
    let options = EstimateOptions {
        apply_ci: !args.no_ci,
        corrective: args.c.map(CorrectiveFactor::custom).transpose()?,
        ..EstimateOptions::default()
    };
    let spec = EstimatorSpec { kind, init_blocks: args.init_blocks, options };
    let blocks = pack_blocks(&BitSequence::load(&args.file)?, args.bits_per_block)?;
    let stat = statistic_for(&spec, &blocks)?;
    let est = estimate_from_statistic(kind, &stat, args.bits_per_block, &options)?;
    let out = EstimateOutput {
        estimator: kind.name(),
        alpha: kind.alpha(),
        bits_per_block: args.bits_per_block,
        init_blocks: stat.init_blocks,
        test_blocks: stat.test_blocks,
        statistic: stat.mean,
        per_term_variance: stat.per_term_variance,
        target: est.target,
        theta: est.theta,
        per_block: est.per_block,
        per_bit: est.per_bit,
        solved: est.solved,
        ci_applied: est.ci_applied,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

#[derive(Serialize)]
struct Sidecar<'a> {
    #[serde(flatten)]
    source: &'a SourceSpec,
    rng: &'static str,
    n_bits: usize,
    format: &'static str,
    true_min_entropy: f64,
    derivation: minent::sources::Derivation,
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let family: SourceFamily = args.spec.parse()?;
    let spec = SourceSpec::new(family, args.seed, args.blocks, args.bits_per_block);
    let bits = sample(&spec)?.unpack();
    let truth = true_min_entropy(&spec)?;
    let format = match args.format {
        BitFormat::Bin => {
            if bits.len() % 8 != 0 {
                return Err(format!(
                    "{} bits do not fill whole bytes; use --format text or change --blocks",
                    bits.len()
                )
                .into());
            }
            fs::write(&args.out, bits.to_bytes())?;
            "bin"
        }
        BitFormat::Text => {
            fs::write(&args.out, bits.to_text())?;
            "text"
        }
    };
    let sidecar = Sidecar {
        source: &spec,
        rng: RNG_NAME,
        n_bits: bits.len(),
        format,
        true_min_entropy: truth.per_bit_min_entropy,
        derivation: truth.derivation,
    };
    fs::write(sidecar_path(&args.out), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult<()> {
    let config = ExperimentConfig::load(&args.config)?;
    let report = run_experiment(&config)?;
    let (rows, aggs) = report.write_to_dir(&config, &args.out)?;
    let meta = serde_json::json!({
        "rng": report.rng,
        "base_seed": config.base_seed,
        "version": env!("CARGO_PKG_VERSION"),
        "rows": report.rows.len(),
    });
    fs::write(args.out.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    println!("{}", rows.display());
    println!("{}", aggs.display());
    Ok(())
}

fn cmd_online(args: OnlineArgs) -> CliResult<()> {
    let input: Box<dyn Read> =
        if args.input == "-" { Box::new(io::stdin().lock()) } else { Box::new(File::open(&args.input)?) };
    let mut reader = BlockReader::new(input, args.bits_per_block)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    writeln!(out, "k,p_c,theta,per_bit_estimate")?;
    let Some(first) = reader.next_block()? else {
        return Err("input holds fewer bits than one block".into());
    };
    let mut state = OnlineState::new(first, args.bits_per_block, args.track_indices)?;
    let mut last_emitted = None;
    while let Some(block) = reader.next_block()? {
        let e = state.update(block)?;
        if e.k % args.emit_every == 0 {
            writeln!(out, "{},{},{},{}", e.k, e.collision_probability, e.theta, e.per_bit)?;
            last_emitted = Some(e.k);
        }
    }
    let e = state.current();
    if last_emitted != Some(e.k) {
        writeln!(out, "{},{},{},{}", e.k, e.collision_probability, e.theta, e.per_bit)?;
    }
    out.flush()?;
    if let Some(indices) = state.collision_indices() {
        let mut err = io::stderr().lock();
        for k in indices {
            writeln!(err, "{k}")?;
        }
    }
    Ok(())
}

fn alphabet(bits_per_block: u32) -> CliResult<usize> {
    if bits_per_block == 0 || bits_per_block > 20 {
        return Err(format!("-L must be in 1..=20 for analysis, got {bits_per_block}").into());
    }
    Ok(1usize << bits_per_block)
}

fn cmd_analyze(cmd: AnalyzeCommand) -> CliResult<()> {
    match cmd {
        AnalyzeCommand::JointRange { statistic, alpha, bits_per_block, points, out } => {
            let b = alphabet(bits_per_block)?;
            let stat = match statistic {
                StatisticName::Maurer => RangeStatistic::MaurerExpectation,
                StatisticName::Shannon => RangeStatistic::Shannon,
                StatisticName::Renyi => RangeStatistic::Renyi(alpha),
            };
            let curve = joint_range_curve(stat, b, &parameter_grid(b, points))?;
            let mut w = csv_out(&out)?;
            writeln!(w, "x,h_lower,h_upper,gap")?;
            for p in curve {
                writeln!(w, "{},{},{},{}", p.x, p.h_min_lower, p.h_min_upper, p.gap)?;
            }
            w.flush()?;
        }
        AnalyzeCommand::Slope { alpha, delta, bits_per_block, points, out } => {
            let b = alphabet(bits_per_block)?;
            let lo = 1.0 / b as f64 + delta;
            if !(delta > 0.0 && lo < 1.0) || points < 2 {
                return Err("need 0 < delta < 1 - 1/B and at least 2 points".into());
            }
            let mut w = csv_out(&out)?;
            writeln!(w, "theta,alpha,z")?;
            for &a in &alpha {
                for j in 0..points {
                    let theta = lo + (1.0 - lo) * j as f64 / (points - 1) as f64;
                    writeln!(w, "{theta},{a},{}", z_slope(theta, a, b)?)?;
                }
            }
            w.flush()?;
        }
        AnalyzeCommand::Variance { alpha, bits_per_block, points, out } => {
            let b = alphabet(bits_per_block)?;
            let mut w = csv_out(&out)?;
            writeln!(w, "theta,alpha,variance")?;
            for &a in &alpha {
                for theta in parameter_grid(b, points) {
                    let p = Distribution::near_uniform(theta, b)?;
                    writeln!(w, "{theta},{a},{}", variance_of_g(&p, a)?)?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn csv_out(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}
