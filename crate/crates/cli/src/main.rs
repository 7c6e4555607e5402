//! `evidiag` command-line interface.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime
//! error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evidiag::harness::SchemeSelector;
use evidiag::ErrorKind;

#[derive(Debug, Parser)]
#[command(
    name = "evidiag",
    version,
    about = "Multi-mode fault diagnosis with fused broad learning classifiers"
)]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the base classifiers and write one snapshot file per classifier.
    Train {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Output directory for snapshots and the dataset manifest.
        #[arg(long, default_value = "snapshots")]
        out: PathBuf,
    },
    /// Score snapshots (individually and fused, without updates) on a CSV.
    Evaluate {
        #[command(flatten)]
        input: StreamInput,
        /// Write the JSON summary here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the fused online stream over a CSV and log every step.
    Stream {
        #[command(flatten)]
        input: StreamInput,
        /// Minimum fused confidence for an update (above 1 freezes).
        #[arg(long, default_value_t = 0.0)]
        gate: f64,
        /// Stop updating once a design reaches this many rows.
        #[arg(long)]
        max_rows: Option<usize>,
        /// JSONL event log.
        #[arg(long)]
        log: PathBuf,
        /// Write the updated snapshots into this directory.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Run the proposed scheme and both baselines; write the report.
    Compare {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_parser = parse_scheme)]
        scheme: Option<SchemeSelector>,
        /// Report directory (overrides `report.out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combine the evidence records of one file into a fused belief.
    Fuse {
        /// Evidence file (JSON lines); `-` reads stdin.
        #[arg(long)]
        evidence: PathBuf,
    },
    /// Generate the configured synthetic dataset as CSV.
    Synth {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct StreamInput {
    /// Snapshot files written by `train`.
    #[arg(long, required = true, num_args = 1..)]
    snapshot: Vec<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    /// CSV schema (TOML); feature columns always come from the snapshot.
    #[arg(long)]
    schema: Option<PathBuf>,
}

fn parse_scheme(s: &str) -> Result<SchemeSelector, String> {
    s.parse().map_err(|e: evidiag::Error| e.to_string())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Runtime => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let default = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default)).init();

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
