//! `thermorbm` command-line driver.

mod commands;
mod fail;
mod report;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::report::DataArgs;
use crate::settings::Mode;

/// Seeds used for multi-seed runs (`train --all-seeds`).
pub const SEED_PRESETS: [u64; 7] = [1, 2, 3, 17, 128, 360, 1000];

#[derive(Debug, Parser)]
#[command(name = "thermorbm", version = report::BUILD_ID, about = "RBM training with a feedback-controlled temperature")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; writes metrics.ndjson, timing.ndjson and checkpoint.bin.
    Train(TrainArgs),
    /// AIS, likelihood and sample diagnostics for a checkpoint.
    Evaluate(EvaluateArgs),
    /// Exact-enumeration checks on small fixtures.
    Oracle(OracleArgs),
    /// Linearization of the controller around a checkpoint.
    Stability(StabilityArgs),
    /// Effect size and Bayesian bootstrap between two groups of reports.
    Compare(CompareArgs),
    /// Ensemble Gibbs samples from a checkpoint.
    Sample(SampleArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Flat TOML configuration (see README for keys).
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Train once per preset seed, into <out-dir>/seed-<n>.
    #[arg(long, conflicts_with = "seed")]
    all_seeds: bool,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Sampling temperature for `--mode fixedT`.
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    n_hidden: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    epochs_override: Option<usize>,
    /// Also write checkpoints/epoch-NNNN.bin every N epochs (0 = never).
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
}

#[derive(Debug, Clone, Args)]
struct TemperatureSource {
    /// Evaluation temperature.
    #[arg(long, conflicts_with = "metrics")]
    temperature: Option<f64>,
    /// Take the temperature (and configuration) from a training metrics file.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Configuration recorded in the output when `--metrics` is not given.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    source: TemperatureSource,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    ais_chains: usize,
    #[arg(long, default_value_t = 1000)]
    ais_temps: usize,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 1000)]
    sample_steps: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Supplies φ, η_λ and α.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Operating point; defaults to the checkpoint's λ.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 1000)]
    chains: usize,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Report files of the first group.
    #[arg(long, num_args = 1.., required = true)]
    a: Vec<PathBuf>,
    /// Report files of the second group.
    #[arg(long, num_args = 1.., required = true)]
    b: Vec<PathBuf>,
    /// Dotted path of the numeric field to compare.
    #[arg(long, default_value = "ess")]
    field: String,
    /// Compare natural logarithms of the field.
    #[arg(long)]
    log: bool,
    #[arg(long, default_value_t = 2.0)]
    rope: f64,
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    source: TemperatureSource,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 6000)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Stability(a) => commands::stability(a),
        Command::Compare(a) => commands::compare(a),
        Command::Sample(a) => commands::sample(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
