mod commands;
mod config;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};

/// Ghost imaging through atmospheric turbulence: coherence length,
/// Monte Carlo simulation, closed-form prediction, and their comparison.
#[derive(Parser, Debug)]
#[command(name = "ghost-turb", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the source-plane coherence length and the immunity verdict.
    Rho0(Common),
    /// Run the Monte Carlo correlator and write the ghost image.
    Simulate(Common),
    /// Write the closed-form ghost image, bracket curve and cancellation table.
    Analytic(Common),
    /// Sweep the coherence length and compare simulated and predicted FWHM.
    Compare(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file (`key = value` lines, optional `[profile]` section).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    frames: Option<u64>,
    /// Coherence length in millimeters (`inf` for vacuum), replacing the
    /// value computed from the profile.
    #[arg(long = "rho0-mm")]
    rho0_mm: Option<f64>,
}

/// Why a command did not succeed; each maps to one exit code.
#[derive(Debug)]
pub enum Failure {
    /// Exit 1: a result is outside its configured tolerance.
    Tolerance(String),
    /// Exit 2: the configuration or its inputs are unusable.
    Config(anyhow::Error),
    /// Exit 3: too few frames to decide.
    Insufficient(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let statistical = e
            .chain()
            .filter_map(|c| c.downcast_ref::<ghost_turb_core::Error>())
            .any(|c| c.is_statistical());
        if statistical {
            Failure::Insufficient(format!("{e:#}"))
        } else {
            Failure::Config(e)
        }
    }
}

impl From<ghost_turb_core::Error> for Failure {
    fn from(e: ghost_turb_core::Error) -> Self {
        anyhow::Error::new(e).into()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Rho0(c) => ("rho0", c),
        Command::Simulate(c) => ("simulate", c),
        Command::Analytic(c) => ("analytic", c),
        Command::Compare(c) => ("compare", c),
    };
    let overrides = Overrides {
        seed: common.seed,
        out: common.out.clone(),
        frames: common.frames,
        rho0_mm: common.rho0_mm,
    };
    let result = RunConfig::load(&common.config, &overrides)
        .map_err(Failure::Config)
        .and_then(|cfg| match cli.command {
            Command::Rho0(_) => commands::rho0(&cfg),
            Command::Simulate(_) => commands::simulate(&cfg),
            Command::Analytic(_) => commands::analytic(&cfg),
            Command::Compare(_) => commands::compare(&cfg),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Tolerance(msg)) => {
            eprintln!("ghost-turb {name}: tolerance failure: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("ghost-turb {name}: error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Insufficient(msg)) => {
            eprintln!("ghost-turb {name}: statistically insufficient: {msg}");
            ExitCode::from(3)
        }
    }
}
