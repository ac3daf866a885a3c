//! `tailrate` command-line entry point.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

mod args;
mod commands;
mod failure;
mod io;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Pipeline(a) => commands::pipeline(a),
        Command::Threshold(a) => commands::threshold(a),
        Command::Fit(a) => commands::fit(a),
        Command::Ci(a) => commands::ci(a),
        Command::Rate(a) => commands::rate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
