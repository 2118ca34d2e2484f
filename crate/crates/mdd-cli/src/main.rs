//! `mdd` command-line tool: corpus generation, staged training, M-best
//! decoding, evaluation, hyperparameter sweeps, and report rendering.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.

mod commands;
mod hyp_io;
mod svg;
mod util;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::commands::{Cli, Command};
use crate::util::{CliError, ExitKind};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Gen(args) => commands::gen::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Decode(args) => commands::decode::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
        Command::Report(args) => commands::report::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { kind, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(match kind {
                ExitKind::Usage => 1,
                ExitKind::Data => 2,
                ExitKind::Runtime => 3,
            })
        }
    }
}
