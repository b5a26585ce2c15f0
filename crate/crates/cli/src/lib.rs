//! Command-line front end: builds joint models, reports graph structure, runs
//! benchmarks, prediction and positive-definiteness sweeps, and writes matrix,
//! metadata and heatmap files.

pub mod args;
pub mod commands;
pub mod error;
pub mod heatmap;
pub mod matfile;

use std::io::Write;

use args::{Cli, Command};
pub use error::{exit, CliError};

/// Environment variable capping the worker threads used inside a build.
pub const THREADS_ENV: &str = "GMRF_THREADS";

pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))
}

pub fn run(cli: &Cli, stdout: &mut impl Write, stderr: &mut impl Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Build(a) => commands::build(a, stdout).map(|_| ()),
        Command::Moralize(a) => commands::moralize(a, stdout),
        Command::Bench(a) => commands::bench(a, stdout, stderr),
        Command::Predict(a) => commands::predict(a, stdout),
        Command::PdSweep(a) => commands::pd_sweep_cmd(a, stdout),
    }
}
