use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("turbulence: invalid profile segment {index}: {reason}")]
    InvalidProfile { index: usize, reason: String },

    #[error("{module}: invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        module: &'static str,
        name: &'static str,
        reason: String,
    },

    #[error("{module}: configuration error: {reason}")]
    Configuration { module: &'static str, reason: String },

    #[error(
        "turbulence: separation ({dx:.3e}, {dy:.3e}) m is not a whole number of pixels; \
         nearest representable offsets along x are {lower:.3e} m and {upper:.3e} m"
    )]
    OffGrid {
        dx: f64,
        dy: f64,
        lower: f64,
        upper: f64,
    },

    #[error("{module}: grid mismatch: {reason}")]
    GridMismatch { module: &'static str, reason: String },

    #[error("correlator: insufficient data: {frames} frame(s), at least 2 required")]
    InsufficientData { frames: u64 },

    #[error("correlator: no significant peak: {reason}")]
    NoDetection { reason: String },

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("io: {path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("io: csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(module: &'static str, name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            module,
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(module: &'static str, reason: impl Into<String>) -> Self {
        Error::Configuration {
            module,
            reason: reason.into(),
        }
    }

    /// True for errors that mean "not enough statistics to decide" rather
    /// than a broken configuration.
    pub fn is_statistical(&self) -> bool {
        matches!(self, Error::InsufficientData { .. } | Error::NoDetection { .. })
    }
}
