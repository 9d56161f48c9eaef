//! `aep`: simulation and verification runs for exclusion processes.
//!
//! Subcommands: `simulate` (Monte Carlo runs from a config file), `oracle`
//! (exact finite-ring golden values), `resolvent` (half-line resolvent
//! sweeps) and `report` (transform comparison verdicts). Exit codes: 0
//! success, 1 runtime error, 2 configuration error, 3 verdict failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Verdict(String),
}

impl CliError {
    pub fn config(msg: String) -> Self {
        CliError::Config(msg)
    }
    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
            CliError::Verdict(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) | CliError::Verdict(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "aep", version, about = "Exclusion-process simulation and verification toolkit")]
struct Cli {
    /// Worker thread cap (0 = library default). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo simulation described by a config file.
    Simulate {
        /// Path to the TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for curves, reports and the manifest.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Exact finite-ring computations and golden-value files.
    Oracle {
        #[command(subcommand)]
        what: commands::oracle::OracleCmd,
    },
    /// Half-line resolvent sweeps: pair values and norm scaling.
    Resolvent {
        /// Pair separations, e.g. "1,2,3,4,5".
        #[arg(long, default_value = "1,2,3,4,5")]
        k: String,
        /// Smallest lambda (a positive power of ten is typical).
        #[arg(long, default_value_t = 1e-8)]
        lambda_min: f64,
        /// Largest lambda.
        #[arg(long, default_value_t = 1e-1)]
        lambda_max: f64,
        /// Grid points per decade.
        #[arg(long, default_value_t = 1)]
        per_decade: usize,
        /// Law for the current kernel of the scaling sweep.
        #[arg(long, default_value = "1:1")]
        law: String,
        #[arg(long, default_value = "resolvent-out")]
        out: PathBuf,
    },
    /// Transform-comparison verdict between a law curve and a reference.
    Report {
        /// CSV with the law's diffusivity curve (method tag "variance").
        #[arg(long)]
        curves: PathBuf,
        /// CSV with the reference (totally asymmetric) curve.
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
        /// Do not fail the process when a band check fails.
        #[arg(long, default_value_t = false)]
        lenient: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()
        {
            eprintln!("error: could not configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Simulate { config, out } => commands::simulate::run(&config, &out),
        Command::Oracle { what } => commands::oracle::run(what),
        Command::Resolvent { k, lambda_min, lambda_max, per_decade, law, out } => {
            commands::resolvent::run(&k, lambda_min, lambda_max, per_decade, &law, &out)
        }
        Command::Report { curves, reference, out, lenient } => {
            commands::report::run(&curves, &reference, &out, lenient)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
