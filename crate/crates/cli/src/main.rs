use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod error;
mod output;
mod svg;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Portrait(a) => commands::portrait(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Plan(a) => commands::plan(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pestctl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
