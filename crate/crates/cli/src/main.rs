use std::process::ExitCode;

use clap::Parser;
use gmrf_cli::args::Cli;
use gmrf_cli::{configure_threads, exit, run};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| run(&cli, &mut std::io::stdout().lock(), &mut std::io::stderr().lock()));
    match result {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("gmrf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
