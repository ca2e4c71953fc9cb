//! Command-line front end for the focal-sanitizer toolkit.
//!
//! Every command reads one JSON experiment config, validates it fully, and
//! writes its outputs under the configured output directory.

pub mod commands;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use error::{CliError, ExitKind};

pub const SEED_ENV: &str = "FOCAL_SANITIZER_SEED";

#[derive(Debug, Parser)]
#[command(name = "focal-sanitizer", version, about = "Focal-entropy adversarial representation learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset and write a cache file.
    GenData(CommonArgs),
    /// Train the encoder game and write checkpoint, metrics and summary.
    Train(CommonArgs),
    /// Train probing classifiers on a checkpoint's frozen embeddings.
    Probe(CommonArgs),
    /// Run a trade-off sweep or a weight grid search.
    Sweep(CommonArgs),
    /// Consolidated analyses of a finished run directory.
    Report(CommonArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed and FOCAL_SANITIZER_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output (or run) directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Weight grid, e.g. `beta_S=0,0.5,1;alpha_T=1`.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub parallel: Option<usize>,
    #[arg(long, value_enum)]
    pub capacity: Option<CapacityArg>,
    /// Checkpoint to probe (default: `<out>/checkpoint.json`).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModeArg {
    FocalKlTau,
    FocalSplit,
    MaxentUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CapacityArg {
    Normal,
    Strong,
    Both,
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Probe(a) => commands::probe(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
