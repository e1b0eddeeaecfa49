//! `chebstep` command-line front end.
//!
//! Exit codes: 0 on success (or convergence), 2 when a solve stops at its
//! iteration cap, 1 on runtime errors and 64 on usage errors.

mod args;
mod commands;
mod table;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::{Cli, Command};
use crate::commands::Outcome;

const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 64;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CHEBSTEP_LOG", "warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = match &cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Compare(a) => commands::compare(a),
        Command::GramAnalysis(a) => commands::gram_analysis(a),
        Command::PerfModel(a) => commands::perf_model(a),
        Command::Moments(a) => commands::moments(a),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("chebstep: iteration cap reached before the tolerance");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Err(e) => {
            eprintln!("chebstep: error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
