//! `radspec`: batch front end for forward spectra, trace extraction, Abel
//! inversion, profile reconstruction and radiality diagnostics.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 IO failure.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Context, Failure};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "radspec", version, about = "Recover radial potentials from semiclassical spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Paths {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory with spectrum CSVs and their manifest.
    #[arg(long)]
    spectra: Option<PathBuf>,
    /// Directory with the curves to consume; defaults to the output directory.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Spectra for every configured h, one CSV each plus a manifest.
    Forward(Paths),
    /// Phase-space and level-set quadrature curves for the configured potential.
    Oracle(Paths),
    /// Trace invariants from the spectra in --spectra.
    Extract(Paths),
    /// Volume and surface invariants from extracted or oracle invariants.
    Invert(Paths),
    /// Profile, defect and F report with plots.
    Reconstruct(Paths),
    /// Isoperimetric defect and pushforward density from quadrature.
    Diagnose(Paths),
    /// Gradient flowlines and the radiality certificate.
    Flowlines(Paths),
}

fn run(command: Command) -> Result<(), Failure> {
    let (paths, action): (Paths, fn(&Context) -> Result<(), Failure>) = match command {
        Command::Forward(p) => (p, commands::forward),
        Command::Oracle(p) => (p, commands::oracle),
        Command::Extract(p) => (p, commands::extract),
        Command::Invert(p) => (p, commands::invert),
        Command::Reconstruct(p) => (p, commands::reconstruct),
        Command::Diagnose(p) => (p, commands::diagnose),
        Command::Flowlines(p) => (p, commands::flowlines),
    };
    let config = RunConfig::load(&paths.config)?;
    let out = paths
        .out
        .or_else(|| config.output.clone())
        .ok_or_else(|| Failure::config("no output directory: pass --out or set `output`"))?;
    action(&Context { config, out, spectra: paths.spectra, input: paths.input })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
