use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod error;

use args::{Cli, Command};
use error::CliError;

fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.threads == 0 {
        return Err(CliError::input("--threads must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::input(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Infer(a) => commands::infer(a),
        Command::Trace(a) => commands::trace(a),
        Command::Robustness(a) => commands::robustness(a),
        Command::Mine(a) => commands::mine(a),
        Command::Report(a) => commands::report(a),
        Command::Lut(c) => commands::lut(c),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AXMAP_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
