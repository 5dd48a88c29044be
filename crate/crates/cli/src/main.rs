use std::process::ExitCode;

use clap::Parser;
use scirel::ErrorCategory;

mod args;
mod commands;
mod config;
mod manifest;

use args::{Cli, Command};
use config::UsageError;

/// 1 for usage and configuration problems, 2 for unreadable or malformed
/// data, 3 for numeric failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<scirel::Error>() {
            return match e.category() {
                ErrorCategory::Config => 1,
                ErrorCategory::Data | ErrorCategory::Io => 2,
                ErrorCategory::Numeric => 3,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Inspect(a) => commands::inspect(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Grid(a) => commands::grid_cmd(a),
        Command::Predict(a) => commands::predict_cmd(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
