use std::process::ExitCode;

use clap::Parser;
use epiwalk_cli::commands::EXIT_ERROR;
use epiwalk_cli::{run_cli, Cli};

fn main() -> ExitCode {
    // Usage errors exit 1: code 2 is reserved for budget truncation.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    ExitCode::from(run_cli(cli) as u8)
}
