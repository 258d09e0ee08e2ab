use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match catgnn::cli::run(catgnn::cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
