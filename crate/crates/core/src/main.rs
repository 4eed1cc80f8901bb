use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    latentlens::cli::run(latentlens::cli::Cli::parse())
}
