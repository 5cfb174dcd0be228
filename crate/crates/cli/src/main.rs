//! `memsig`: corpus preparation, language-model training, probing and
//! signature rendering as one pipeline of subcommands.

mod cli;
mod commands;
mod run_manifest;

use std::process::ExitCode;

use clap::Parser;
use memsig::ErrorCategory;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = cli::Cli::parse();
    match commands::dispatch(cli.command, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (tag, code) = match e.category() {
                ErrorCategory::Usage => ("usage", 2),
                ErrorCategory::Data => ("data", 3),
                ErrorCategory::Numeric => ("numeric", 4),
            };
            eprintln!("memsig: {tag} error: {e}");
            ExitCode::from(code)
        }
    }
}
