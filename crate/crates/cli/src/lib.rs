//! Command-line front end: builds operators for the supported systems and
//! writes spectra, sweeps, oracle comparisons and clusterings to disk.

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::Report;
pub use config::{Method, RunArgs, RunConfig, SystemKind};

#[derive(Debug, Parser)]
#[command(
    name = "eto",
    version,
    about = "Entropic transfer operators from point clouds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub args: RunArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Leading eigenvalues for each epsilon (spectrum.csv, spectrum.svg).
    Spectrum,
    /// Real eigenvalues across an epsilon grid (sweep.csv, sweep.svg).
    Sweep,
    /// Shift-map spectra against the closed form (oracle.csv, rational.csv).
    Oracle,
    /// Sets from dominant real eigenvectors (clusters.csv, partition.csv, splits.csv).
    Cluster,
    /// Markov and invariance defects of the entropic operator and baselines (baseline.csv).
    Baseline,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure while {stage}: {source}")]
    Numerical {
        stage: String,
        #[source]
        source: entropic_transfer::Error,
    },
    #[error("no qualifying structure found: {0}")]
    NoStructure(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Output(_) => 1,
            CliError::Numerical { .. } => 2,
            CliError::NoStructure(_) => 3,
        }
    }
}

pub fn run(cli: &Cli) -> Result<Report, CliError> {
    let cfg = RunConfig::resolve(&cli.args)?;
    match cli.command {
        Command::Spectrum => commands::spectrum(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Oracle => commands::oracle(&cfg),
        Command::Cluster => commands::cluster(&cfg),
        Command::Baseline => commands::baseline(&cfg),
    }
}
