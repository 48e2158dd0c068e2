use std::process::ExitCode;

use clap::Parser;
use fbcap::cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fbcap: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
