use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vnpc_core::ErrorKind;

mod commands;
mod settings;

use settings::Flags;

/// Bayesian nonparametric estimation of multivariate spectral densities.
#[derive(Parser, Debug)]
#[command(name = "vnpc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate fit and AIC over VAR orders 0..=pmax (elbow.csv, elbow.svg).
    Elbow(Flags),
    /// Run one chain and write draws, traces and posterior summaries.
    Fit(Flags),
    /// Replication study on a builtin model against its true spectral density.
    Study(Flags),
    /// Write a simulated series from a builtin model (var2 or vma1) to CSV.
    Simulate(Flags),
}

const EXIT_IO: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Elbow(f) => f.resolve("vnpc-out").and_then(|s| commands::elbow(&s)),
        Command::Fit(f) => f.resolve("vnpc-out").and_then(|s| commands::fit(&s)),
        Command::Study(f) => f.resolve("vnpc-out").and_then(|s| commands::study(&s)),
        Command::Simulate(f) => f
            .resolve("simulated.csv")
            .and_then(|s| commands::simulate(&s)),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Io => EXIT_IO,
                ErrorKind::Validation => EXIT_VALIDATION,
                ErrorKind::Numerical => EXIT_NUMERICAL,
            })
        }
    }
}
