//! `rv <generate|learn|falsify|verify|cert|report> --config <path> --out <dir> [--seed <list>]`

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use commands::Invocation;
use error::{CliError, EX_USAGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Generate positive environment data.
    Generate,
    /// Learn a bound from snapshot files.
    Learn,
    /// Search for requirement violations, optionally under a bound.
    Falsify,
    /// Run the falsify-learn loop to a verdict.
    Verify,
    /// Print certificate values.
    Cert,
    /// Summarize a run directory and emit plot data.
    Report,
}

/// Learn reactive environment bounds and verify closed-loop requirements.
///
/// Exit codes: 0 success or verified, 1 falsified, 2 falsified at the
/// iteration cap, 3 inherently unsafe, 64 usage, 65 data format, 66 missing
/// input, 70 internal failure, 74 write failure.
#[derive(Debug, Parser)]
#[command(name = "rv", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; for `report`, the run directory to summarize.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds, e.g. `0-4` or `1,3,5`.
    #[arg(long)]
    seed: Option<String>,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let seeds = cli.seed.as_deref().map(config::parse_seeds).transpose()?;
    let inv = Invocation { config_path: cli.config, out: cli.out, seeds };
    match cli.command {
        Command::Generate => commands::generate(&inv),
        Command::Learn => commands::learn(&inv),
        Command::Falsify => commands::falsify_cmd(&inv),
        Command::Verify => commands::verify(&inv),
        Command::Cert => commands::cert(&inv),
        Command::Report => commands::report(&inv),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EX_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("rv: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
