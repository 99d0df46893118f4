//! `xcb` command-line driver.

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] xcb_core::Error),
}

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Core(_) => ExitCode::from(1),
            }
        }
    }
}
