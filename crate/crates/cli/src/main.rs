//! `spinphoton` command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 when a configuration or
//! input file fails to load or validate.

mod commands;
mod manifest;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "spinphoton", version, about = "Time-bin spin-photon entanglement simulator and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Kv,
    Csv,
}

#[derive(Debug, Args)]
#[group(multiple = false)]
pub struct Stop {
    /// Stop after this many heralded attempts.
    #[arg(long)]
    heralds: Option<u64>,
    /// Stop after this many attempts.
    #[arg(long)]
    attempts: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the Monte Carlo protocol and write a clicks table plus manifest.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        stop: Stop,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Predicted contrasts, fidelity and rate chain from the configuration.
    Budget {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Visibilities, readout correction and fidelity of a clicks table.
    Analyze {
        /// Clicks table written by `simulate`.
        clicks: PathBuf,
        /// Supplies the readout fidelities; defaults apply otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for the binned parity curves.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Interferometer phases from paired APD readings.
    Phases {
        apd: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate { config, seed, stop, out, format } => {
            commands::simulate(config.as_deref(), seed, stop.heralds, stop.attempts, &out, format)
        }
        Command::Budget { config, format } => commands::budget(config.as_deref(), format),
        Command::Analyze { clicks, config, out, format } => {
            commands::analyze(&clicks, config.as_deref(), out.as_deref(), format)
        }
        Command::Phases { apd, format } => commands::phases(&apd, format),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
