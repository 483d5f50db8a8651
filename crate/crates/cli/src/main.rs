//! `bdarma`: backtests, forecasts, residual diagnostics and synthetic data
//! for monthly compositional series.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data
//! validation or file error, 3 some model failed at some origin.

mod commands;
mod config;
mod params;
mod plot;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Outcome;
use crate::config::{resolve, RunArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

/// Progress line on stderr, tagged with the subcommand.
pub fn log(command: &str, msg: &str) {
    eprintln!("[bdarma {command}] {msg}");
}

#[derive(Parser)]
#[command(name = "bdarma", version, about = "Bayesian Dirichlet ARMA forecasting of monthly compositions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rolling-origin backtest of the selected models
    Backtest {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Forecast from the end of the data with fan-chart plots
    Forecast {
        #[command(flatten)]
        run: RunArgs,
        /// Skip the SVG fan charts
        #[arg(long)]
        no_plots: bool,
        /// Also write every fan as a binary dump
        #[arg(long)]
        dump_fans: bool,
    },
    /// Generate a synthetic dataset from a parameter file
    Simulate {
        /// JSON parameter file
        #[arg(long, short = 'p')]
        params: PathBuf,
        /// Number of months
        #[arg(long, short = 't')]
        months: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV; the parameters are recorded next to it
        #[arg(long, short = 'o')]
        out: PathBuf,
    },
    /// VAR residual diagnostics in ALR space
    Diagnose {
        #[command(flatten)]
        run: RunArgs,
    },
}

fn dispatch(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Backtest { run } => commands::backtest(&resolve(&run)?),
        Command::Forecast { run, no_plots, dump_fans } => commands::forecast(&resolve(&run)?, !no_plots, dump_fans),
        Command::Simulate { params, months, seed, out } => commands::simulate(&params, months, seed, &out),
        Command::Diagnose { run } => commands::diagnose(&resolve(&run)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(n)) => {
            eprintln!("bdarma: {n} model run(s) failed; see manifest.json");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("bdarma: error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
