//! Command-line runner: trains cellular-automaton variants on grid-puzzle
//! tasks, scores them, and renders reports and rollout animations.

mod commands;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cellarc::dataset::PaddingMode;
use cellarc::engram::VariantName;

#[derive(Parser)]
#[command(
    name = "cellarc",
    version,
    about = "Per-task training of neural cellular automata on grid puzzles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every requested variant on every task, score, and report.
    Solve(SolveArgs),
    /// Rebuild report.md / report.csv from an existing run directory.
    Report(ReportArgs),
    /// Render a trained model's rollout on a task as PNGs and a GIF.
    Frames(FramesArgs),
    /// Print statistics about a task directory.
    DatasetStats(StatsArgs),
}

/// How a run treats tasks whose outputs differ in shape from their inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PaddingArg {
    /// Drop size-changing tasks; grids keep their native sizes.
    Ignore,
    /// Keep every task by padding all grids to a fixed canvas.
    Max,
}

impl From<PaddingArg> for PaddingMode {
    fn from(arg: PaddingArg) -> Self {
        match arg {
            PaddingArg::Ignore => PaddingMode::IgnoreResizing,
            PaddingArg::Max => PaddingMode::MaximalPadding,
        }
    }
}

fn parse_variant(s: &str) -> Result<VariantName, String> {
    s.parse().map_err(|e: cellarc::engram::VariantError| e.to_string())
}

#[derive(Args)]
struct SolveArgs {
    /// Directory of task JSON files.
    #[arg(long, env = "CELLARC_DATASET")]
    dataset: PathBuf,
    /// Variants to train, comma-separated.
    #[arg(
        long,
        env = "CELLARC_VARIANTS",
        default_value = "NCA,v1,v2,v3,v4",
        value_delimiter = ',',
        value_parser = parse_variant
    )]
    variants: Vec<VariantName>,
    /// Size-changing task handling (variants that require padding always
    /// run padded regardless).
    #[arg(long, env = "CELLARC_PADDING", value_enum, default_value_t = PaddingArg::Ignore)]
    padding: PaddingArg,
    /// Global seed; per-task seeds derive from it and the task id.
    #[arg(long, env = "CELLARC_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: one per core).
    #[arg(long, env = "CELLARC_WORKERS")]
    workers: Option<usize>,
    /// Training iterations per task.
    #[arg(long, env = "CELLARC_ITERATIONS", default_value_t = 3000)]
    iterations: usize,
    /// Strict and loose solve thresholds on ln(MSE).
    #[arg(
        long,
        num_args = 2,
        allow_negative_numbers = true,
        default_values_t = [-7.0, -6.0],
        value_names = ["STRICT", "LOOSE"]
    )]
    thresholds: Vec<f64>,
    /// Run directory for checkpoints, results, logs, and reports.
    #[arg(long, env = "CELLARC_OUT", default_value = "out")]
    out: PathBuf,
    /// Retrain tasks whose results already exist instead of skipping them.
    #[arg(long, env = "CELLARC_FORCE")]
    force: bool,
    /// Assumed device power draw for the cost estimate.
    #[arg(long, env = "CELLARC_POWER_WATTS", default_value_t = 200.0)]
    power_watts: f64,
    /// Electricity price for the cost estimate.
    #[arg(long, env = "CELLARC_PRICE_PER_KWH", default_value_t = 0.37)]
    price_per_kwh: f64,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory holding results/ from a previous solve.
    #[arg(long, env = "CELLARC_OUT", default_value = "out")]
    out: PathBuf,
    /// Re-derive solved flags at different thresholds on ln(MSE).
    #[arg(
        long,
        num_args = 2,
        allow_negative_numbers = true,
        value_names = ["STRICT", "LOOSE"]
    )]
    thresholds: Option<Vec<f64>>,
    #[arg(long, env = "CELLARC_POWER_WATTS")]
    power_watts: Option<f64>,
    #[arg(long, env = "CELLARC_PRICE_PER_KWH")]
    price_per_kwh: Option<f64>,
}

#[derive(Args)]
struct FramesArgs {
    /// Checkpoint produced by `solve`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Task JSON file to roll out on.
    #[arg(long)]
    task: PathBuf,
    /// Test pair whose input seeds the lattice.
    #[arg(long, default_value_t = 0)]
    pair: usize,
    /// Steps to roll out.
    #[arg(long, default_value_t = 96)]
    steps: usize,
    /// Pixels per lattice cell.
    #[arg(long, default_value_t = 8)]
    scale: u32,
    /// Output directory for the frames.
    #[arg(long, default_value = "frames")]
    out: PathBuf,
    /// Skip the animated GIF and write only PNG frames.
    #[arg(long)]
    no_gif: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Directory of task JSON files.
    #[arg(long, env = "CELLARC_DATASET")]
    dataset: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => commands::solve::run(args),
        Command::Report(args) => commands::report::run(args),
        Command::Frames(args) => commands::frames::run(args),
        Command::DatasetStats(args) => commands::stats::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
