//! `opj`: analyze experiment CSVs, run the simulation scenarios and export
//! strata diagnostics.

mod commands;
mod config;
mod format;

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Estimation(#[from] opj::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Estimation(e) => e.code(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Estimation(e) => {
                let usage = matches!(
                    e,
                    opj::Error::InvalidConfig(_)
                        | opj::Error::IllegalScenario(_)
                        | opj::Error::InvalidStrataCount(_)
                );
                if e.is_input_error() || usage {
                    2
                } else {
                    3
                }
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "opj",
    version,
    about = "Post-stratified treatment effect estimation with a delete-D jackknife"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the treatment effect of an experiment CSV (`w,y,x1,...`).
    Analyze(commands::AnalyzeArgs),
    /// Run a Monte Carlo scenario and write a metrics table.
    Simulate(commands::SimulateArgs),
    /// Export strata boundaries, per-stratum counts and density data.
    Strata(commands::StrataArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error:usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Analyze(args) => commands::analyze(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Strata(args) => commands::strata(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error:{}: {}", e.code(), msg);
            ExitCode::from(e.exit_code())
        }
    }
}
