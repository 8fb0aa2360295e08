use std::process::ExitCode;

use clap::Parser;
use dbsrc_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_broken_pipe() => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dbsrc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
