//! `run.json`: everything needed to repeat a run, plus what it produced.

use std::path::Path;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Serialize)]
struct Versions {
    cli: &'static str,
    core: &'static str,
}

#[derive(Serialize)]
pub struct RunRecord {
    tool: &'static str,
    command: String,
    versions: Versions,
    seed: u64,
    frames: u64,
    wavelength_m: f64,
    wavelength_note: &'static str,
    /// `None` when there is no turbulence.
    rho0_m: Option<f64>,
    started_unix_s: u64,
    wall_time_s: f64,
    outputs: Vec<String>,
    /// The full configuration in its own file format; feeding it back with
    /// `--config` repeats the run.
    config: String,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    summary: serde_json::Value,
}

impl RunRecord {
    pub fn new(command: &str, cfg: &RunConfig, rho0: f64, started: SystemTime, elapsed: Duration) -> Self {
        RunRecord {
            tool: "ghost-turb",
            command: command.to_string(),
            versions: Versions {
                cli: env!("CARGO_PKG_VERSION"),
                core: ghost_turb_core::VERSION,
            },
            seed: cfg.seed,
            frames: cfg.frames,
            wavelength_m: cfg.wavelength,
            wavelength_note: crate::config::WAVELENGTH_NOTE,
            rho0_m: rho0.is_finite().then_some(rho0),
            started_unix_s: started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_time_s: elapsed.as_secs_f64(),
            outputs: Vec::new(),
            config: cfg.to_text(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn outputs(mut self, names: &[&str]) -> Self {
        self.outputs = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn summary(mut self, value: serde_json::Value) -> Self {
        self.summary = value;
        self
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("run.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
    }
}
