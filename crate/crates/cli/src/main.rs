//! `hftsim` — single executable wiring the pipeline end to end:
//! synthetic data generation, offline pre-training, live simulation with
//! online updates, the figure sweep, threshold calibration, the latency
//! bench, and raw feature/label dumps.
//!
//! Configuration precedence, highest first: command-line flag, config file
//! entry (`--config file.json`, flat dotted keys), built-in default. Every
//! command writes a manifest capturing its fully resolved configuration.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "hftsim", version, about = "Tick-level trading simulation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic tick-data day as CSV.
    Gen(GenArgs),
    /// Train an ensemble offline over one or more day files.
    Pretrain(PretrainArgs),
    /// Simulate a day: predict, trade, and (unless frozen) keep training.
    Run(RunArgs),
    /// Run the full figure sweep over two day files.
    Sweep(SweepArgs),
    /// Pick the confidence bound hitting a participation target.
    Calibrate(CalibrateArgs),
    /// Measure per-phase latency and throughput of the live path.
    Bench(BenchArgs),
    /// Dump the normalized feature matrix of a day file.
    Features(FeaturesArgs),
    /// Dump spread-crossing labels of a day file.
    Label(LabelArgs),
}

#[derive(clap::Args)]
struct GenArgs {
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_ticks: Option<usize>,
    #[arg(long)]
    symbol: Option<String>,
    /// Number of securities; above 1, symbols get numeric suffixes and the
    /// streams interleave tick by tick.
    #[arg(long)]
    securities: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    sigma_m: Option<f64>,
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    tick_size: Option<String>,
    /// Regime shift: tick index at which the dynamics change.
    #[arg(long, requires = "shift_theta", requires = "shift_sigma")]
    shift_at: Option<usize>,
    #[arg(long, requires = "shift_at")]
    shift_theta: Option<f64>,
    #[arg(long, requires = "shift_at")]
    shift_sigma: Option<f64>,
}

#[derive(clap::Args)]
struct PretrainArgs {
    /// Input day CSV; repeat for multiple days.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// Output model JSON path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trailing-window length W.
    #[arg(long)]
    w: Option<usize>,
    /// Prediction horizon H.
    #[arg(long)]
    h: Option<usize>,
    /// Hidden layer sizes, comma separated (e.g. "10,10").
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    no_move_cap: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tick_size: Option<String>,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    /// Pre-trained model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    h: Option<usize>,
    /// Online mini-batch size B.
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    lr_online: Option<f64>,
    /// Disable online updates (constant weights).
    #[arg(long)]
    frozen: bool,
    /// Exclude warmup ticks from the participation denominator.
    #[arg(long)]
    no_warmup: bool,
    /// Worker threads for multi-security runs (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    tick_size: Option<String>,
}

#[derive(clap::Args)]
struct SweepArgs {
    /// Pre-training day CSV.
    #[arg(long)]
    day1: PathBuf,
    /// Evaluation day CSV.
    #[arg(long)]
    day2: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "sweep_out")]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid scale: "reduced" or "full".
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    target_pct: Option<f64>,
    #[arg(long)]
    calibration_frac: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    tick_size: Option<String>,
}

#[derive(clap::Args)]
struct CalibrateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Optional JSON output path; the result always prints to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    target_pct: Option<f64>,
    #[arg(long)]
    tick_size: Option<String>,
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Optional JSON report path; the report always prints to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_ticks: Option<usize>,
    #[arg(long)]
    securities: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(clap::Args)]
struct FeaturesArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    tick_size: Option<String>,
}

#[derive(clap::Args)]
struct LabelArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    tick_size: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code: u8 = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Gen(args) => commands::gen(args),
        Command::Pretrain(args) => commands::pretrain(args),
        Command::Run(args) => commands::run(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Calibrate(args) => commands::calibrate(args),
        Command::Bench(args) => commands::bench(args),
        Command::Features(args) => commands::features(args),
        Command::Label(args) => commands::label(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
