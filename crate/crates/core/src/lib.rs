//! Lensless pseudothermal ghost imaging through atmospheric turbulence.
//!
//! The crate has two halves that check each other:
//!
//! * a Monte Carlo simulator: a pseudothermal [`source`] of independent
//!   circular-Gaussian subsources, thin phase screens from [`turbulence`],
//!   extended Huygens-Fresnel propagation in [`optics`], and the bucket /
//!   reference covariance estimator in [`correlator`];
//! * a closed-form engine in [`analytic`] giving the second-order
//!   coherence function under square-law turbulence, the predicted ghost
//!   point-spread function, and the source-diameter immunity test.
//!
//! All randomness is addressed by `(seed, frame index)` so results do not
//! depend on how frames are scheduled across threads.

pub mod analytic;
pub mod correlator;
pub mod error;
pub mod geometry;
pub mod io;
pub mod optics;
pub mod rng;
pub mod source;
pub mod turbulence;

/// Crate version, recorded in run records.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use geometry::{Grid2D, ImageMap, Point2};
pub use optics::{ComplexField, OpticalConfig};
pub use source::{FrameSample, SubsourceSet};
pub use turbulence::{CnSquaredProfile, PhaseScreen, TurbulenceModel};
