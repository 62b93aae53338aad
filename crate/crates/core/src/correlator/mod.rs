//! Ghost-image formation from Monte Carlo frames: object masks and the
//! bucket detector, the covariance estimator, PSF width metrics, and the
//! frame pipeline that ties source, turbulence and propagation together.

mod estimate;
mod mask;
mod metrics;
mod pipeline;

pub use estimate::{GhostImage, GhostImageEstimate};
pub use mask::{bucket_signal, MaskDescriptor, ObjectMask};
pub use metrics::{psf_metrics, PsfMetrics};
pub use pipeline::{run_simulation, screen_grid_for_sources, Simulation, SimulationSetup};
