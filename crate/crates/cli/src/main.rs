//! `tailflow`: experiment runner for tail-aware flows.

mod commands;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::commands::{GammaArgs, RearrangeArgs, SynthArgs};
use crate::spec::FitOptions;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Numeric(_) => 2,
            Self::Usage(_) => 64,
            Self::Data(_) => 65,
            Self::Io { .. } => 74,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tailflow", version, about = "Tail-aware normalizing flow experiments")]
struct Cli {
    /// Log progress to stderr
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a flow and write report.json, model.json and quantiles.csv
    Fit {
        /// Flat `key = value` file; flags take precedence
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        options: FitOptions,
    },
    /// Print the tail profile of a CSV sample as JSON
    Gamma(GammaArgs),
    /// Tabulate the increasing rearrangement between two laws
    Rearrange(RearrangeArgs),
    /// Write a synthetic dataset as CSV
    Synth(SynthArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(64) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Fit { config, options } => commands::fit(config.as_deref(), options),
        Command::Gamma(a) => commands::gamma(&a),
        Command::Rearrange(a) => commands::rearrange(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
