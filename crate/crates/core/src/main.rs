use std::io;
use std::process::ExitCode;

use clap::error::ErrorKind;
use numsim::cli::{self, CliError};

fn main() -> ExitCode {
    let opts = match cli::parse_args(std::env::args_os()) {
        Ok(o) => o,
        Err(CliError::Clap(e))
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) =>
        {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(CliError::Clap(e)) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default();
            eprintln!("numsim: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("numsim: {e}");
            return ExitCode::from(2);
        }
    };
    let stdout = io::stdout();
    let stderr = io::stderr();
    match cli::run(&opts, &mut stdout.lock(), &mut stderr.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("numsim: {e}");
            ExitCode::FAILURE
        }
    }
}
