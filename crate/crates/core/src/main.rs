use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let args = crfol::cli::Args::parse();
    match crfol::cli::run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
