//! `capnet`: dataset generation, training, evaluation, sweeps and reports.

mod commands;
mod error;
mod manifest;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "capnet", version, about = "Capacity networks for multiple instance regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from a DatasetSpec JSON file.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to $CAPNET_DATA_DIR/<config file stem>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one model from a RunConfig JSON file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated reports to emit.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        metric: Vec<Metric>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Number of permutations for `permsens`.
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Base seed for `permsens`; pass j uses seed + j.
        #[arg(long, default_value_t = 1000)]
        seed: u64,
    },
    /// Train every cell of a sweep matrix and tabulate the results.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of cells trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Summarize training output directories into plot-ready CSV.
    Report {
        /// Directories written by `capnet train`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Mse,
    Intermediates,
    Permsens,
    Accuracy,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { config, out, seed } => commands::generate(&config, out, seed),
        Command::Train { config, out, seed } => commands::train(&config, &out, seed),
        Command::Eval {
            checkpoint,
            dataset,
            out,
            metric,
            split,
            k,
            seed,
        } => commands::eval(&commands::EvalArgs {
            checkpoint,
            dataset,
            out,
            metrics: metric,
            split,
            k,
            seed,
        }),
        Command::Sweep { config, out, jobs } => sweep::run(&config, &out, jobs),
        Command::Report { runs, out } => commands::report(&runs, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
