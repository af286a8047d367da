//! Command-line front end: run simulations, convergence studies, oracle
//! comparisons and invariant validation, emitting CSV/JSON artifacts.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::CliError;

#[derive(Parser)]
#[command(
    name = "clawpart",
    version,
    about = "Meshfree characteristic-particle solver for 1D scalar conservation laws"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the TOML configuration file.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(short, long)]
    out: PathBuf,
    /// Override a config key, e.g. --set d_min=0.01 or
    /// --set output_times=[0.0,1.0]. May be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation; writes snapshots.csv, curve_t*.csv,
    /// diagnostics.csv and events.jsonl.
    Run(CommonArgs),
    /// Convergence study over the configured ladder of spacings; writes
    /// errors.csv and slopes.json.
    Converge(CommonArgs),
    /// Compare the particle method against a finite-volume run of equal
    /// size; writes compare.csv.
    Compare(CommonArgs),
    /// Check conservation/TVD/entropy/interpolant invariants on the
    /// configured problem; writes validate_report.json.
    Validate(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => with_config(a, commands::cmd_run),
        Command::Converge(a) => with_config(a, commands::cmd_converge),
        Command::Compare(a) => with_config(a, commands::cmd_compare),
        Command::Validate(a) => with_config(a, commands::cmd_validate),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn with_config(
    args: &CommonArgs,
    f: fn(&config::LoadedConfig, &std::path::Path) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let loaded = config::load(&args.config, &args.overrides)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Run(format!("cannot create {}: {e}", args.out.display())))?;
    f(&loaded, &args.out)
}
