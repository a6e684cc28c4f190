mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};
use hcdh::Error;

use args::Cli;

fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        3
    } else if e.is_numeric() {
        4
    } else {
        2
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("hcdh: error: {e}");
    ExitCode::from(exit_code(e))
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let argv = match config::expand(raw, &Cli::command()) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
