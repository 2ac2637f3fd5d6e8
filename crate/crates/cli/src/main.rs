//! Batch operator surface over the recognition engine: dataset generation,
//! noise transforms, splitting, training, evaluation, single-image
//! recognition, activation inspection and report/chart emission.
//!
//! Exit codes: 0 success, 1 operation error, 2 usage error. Every run with
//! an output directory records a manifest there; `--manifest` replays a
//! recorded run byte-for-byte.

mod args;
mod chart;
mod commands;
mod manifest;
mod pgm;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use args::Command;

#[derive(Parser)]
#[command(name = "qocr", version, about = "Word-image recognition toolkit")]
struct Cli {
    /// Replay a previously recorded run exactly as it was invoked.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match (cli.manifest, cli.command) {
        (Some(path), None) => match manifest::load(&path) {
            Ok(m) => m.command,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(1);
            }
        },
        (None, Some(command)) => command,
        (None, None) => {
            eprintln!("error: expected a subcommand or --manifest; see --help");
            return ExitCode::from(2);
        }
        (Some(_), Some(_)) => {
            eprintln!("error: --manifest replaces the subcommand; give one or the other");
            return ExitCode::from(2);
        }
    };

    match commands::run(command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
