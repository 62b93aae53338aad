//! Turbulence: C_n² profiles, the source-plane coherence length ρ₀, and
//! square-law phase screens.

mod profile;
mod screen;

pub use profile::{coherence_length, weighted_path_integral, CnSquaredProfile, Segment};
pub use screen::{
    generate_phase_screen, generate_phase_screen_pair, structure_function_estimate, PhaseScreen,
    ScreenGenerator, ScreenSpec, StructureEstimate,
};

use crate::error::{Error, Result};

/// Where and how turbulence acts in a simulation.
///
/// `rho0 == f64::INFINITY` means no turbulence. The screen position is a
/// fraction of the path: 0 puts a thin screen in the source plane, 1 puts
/// it directly in front of the detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurbulenceModel {
    rho0: f64,
    screen_position_fraction: f64,
    paths_independent: bool,
}

impl TurbulenceModel {
    pub fn new(rho0: f64, screen_position_fraction: f64, paths_independent: bool) -> Result<Self> {
        if rho0.is_nan() || rho0 <= 0.0 {
            return Err(Error::param(
                "turbulence",
                "rho0",
                format!("must be positive or infinite, got {rho0}"),
            ));
        }
        if !(0.0..=1.0).contains(&screen_position_fraction) {
            return Err(Error::param(
                "turbulence",
                "screen_position_fraction",
                format!("must lie in [0, 1], got {screen_position_fraction}"),
            ));
        }
        Ok(TurbulenceModel {
            rho0,
            screen_position_fraction,
            paths_independent,
        })
    }

    /// Source-plane screens, drawn independently for the two paths.
    pub fn source_plane(rho0: f64) -> Result<Self> {
        Self::new(rho0, 0.0, true)
    }

    pub fn vacuum() -> Self {
        TurbulenceModel {
            rho0: f64::INFINITY,
            screen_position_fraction: 0.0,
            paths_independent: true,
        }
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    pub fn screen_position_fraction(&self) -> f64 {
        self.screen_position_fraction
    }

    pub fn paths_independent(&self) -> bool {
        self.paths_independent
    }

    pub fn is_vacuum(&self) -> bool {
        self.rho0.is_infinite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_validation() {
        assert!(TurbulenceModel::new(0.0, 0.0, true).is_err());
        assert!(TurbulenceModel::new(f64::NAN, 0.0, true).is_err());
        assert!(TurbulenceModel::new(0.05, 1.5, true).is_err());
        assert!(TurbulenceModel::new(0.05, -0.1, true).is_err());
        assert!(TurbulenceModel::new(f64::INFINITY, 1.0, false).unwrap().is_vacuum());
        assert!(!TurbulenceModel::source_plane(0.05).unwrap().is_vacuum());
    }
}
