//! Command-line driver. Exit status: 0 success, 2 configuration error,
//! 3 solver failure, 4 validation failure.

mod args;
mod commands;
mod error;
mod io;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::CliError;
use settings::Settings;

fn run(cli: Cli) -> Result<(), CliError> {
    let s = Settings::resolve(cli.command.name(), cli.command.common())?;
    match &cli.command {
        Command::Forward { zero_source, .. } => commands::forward(&s, *zero_source),
        Command::Reconstruct { observations, .. } => commands::reconstruct(&s, observations.as_deref()),
        Command::Counterexample { .. } => commands::counterexample(&s),
        Command::Validate { quick, corrupt, .. } => commands::validate(&s, *quick, *corrupt),
        Command::Sweep { c_values, .. } => commands::sweep(&s, c_values),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
