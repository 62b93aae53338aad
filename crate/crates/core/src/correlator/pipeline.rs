//! Frame pipeline: sample → screen → propagate → bucket / reference →
//! accumulate.
//!
//! Frames are processed in fixed chunks, chunks are evaluated in parallel,
//! and the partial estimates are merged in chunk order. Each frame's random
//! numbers depend only on `(seed, frame index)`, so the result is the same
//! bit for bit on any number of threads.

use num_complex::Complex64;
use rayon::prelude::*;

use super::estimate::GhostImageEstimate;
use super::mask::ObjectMask;
use crate::error::{Error, Result};
use crate::geometry::{Grid2D, Point2};
use crate::optics::{apply_source_screen, propagate_subsources, OpticalConfig, Propagator};
use crate::rng;
use crate::source::{sample_frame, SubsourceSet};
use crate::turbulence::{PhaseScreen, ScreenGenerator, ScreenSpec, TurbulenceModel};

const CHUNK_FRAMES: u64 = 64;
const MAX_SCREEN_SIDE: usize = 128;

#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub optics: OpticalConfig,
    pub sources: SubsourceSet,
    pub model: TurbulenceModel,
    /// Object plane: the bucket integrates `|u|²·T` over this mask.
    pub mask: ObjectMask,
    /// Reference detector sampling.
    pub reference: Grid2D,
    pub frames: u64,
    pub seed: u64,
}

enum Turbulence {
    None,
    /// Screens sampled at the subsource positions.
    SourcePlane(ScreenGenerator),
    /// Phase-only screens directly at the detectors. They multiply each
    /// pixel's field by a unit phasor, so bucket and reference intensities
    /// are exactly those of the vacuum path and no screen is drawn.
    DetectorPlane,
    Intermediate(ScreenGenerator),
}

pub struct Simulation {
    setup: SimulationSetup,
    support: Vec<(usize, f64)>,
    bucket: Propagator,
    reference: Propagator,
    turbulence: Turbulence,
}

/// Screen grid over the source disc. For lattice sources the pitch is the
/// lattice pitch divided by the smallest integer that resolves ρ₀/4, and
/// the grid is centered so every subsource lands on a node.
pub fn screen_grid_for_sources(sources: &SubsourceSet, rho0: f64) -> Result<Grid2D> {
    let (lo, hi) = sources.bounding_box();
    let base = sources
        .lattice_pitch()
        .unwrap_or_else(|| (sources.diameter() / 32.0).max(f64::MIN_POSITIVE));
    let limit = rho0 / 4.0;
    let mut pitch = base;
    let mut n = 1.0;
    while rho0.is_finite() && pitch >= limit {
        n += 1.0;
        pitch = base / n;
    }
    let (center, half_x, half_y) = if sources.lattice_pitch().is_some() {
        let reach = lo.x.abs().max(hi.x.abs()).max(lo.y.abs()).max(hi.y.abs());
        let half = (reach / pitch).round() as usize + 1;
        (Point2::ORIGIN, half, half)
    } else {
        let c = (lo + hi) * 0.5;
        (
            c,
            ((hi.x - lo.x) / (2.0 * pitch)).ceil() as usize + 1,
            ((hi.y - lo.y) / (2.0 * pitch)).ceil() as usize + 1,
        )
    };
    Grid2D::new(2 * half_x + 1, 2 * half_y + 1, pitch, center)
}

fn intermediate_screen_grid(setup: &SimulationSetup) -> Result<Grid2D> {
    let f = setup.model.screen_position_fraction();
    let length = setup.optics.path_length();
    let (src_lo, src_hi) = setup.sources.bounding_box();
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for g in [setup.mask.grid(), &setup.reference] {
        let a = src_lo * (1.0 - f) + g.point(0, 0) * f;
        let b = src_hi * (1.0 - f) + g.point(g.nx() - 1, g.ny() - 1) * f;
        lo = Point2::new(lo.x.min(a.x), lo.y.min(a.y));
        hi = Point2::new(hi.x.max(b.x), hi.y.max(b.y));
    }
    let margin = 3.5 * (setup.optics.wavelength() * f * (1.0 - f) * length).sqrt();
    // The outer 30% of each half-width is tapered by the two-leg propagator.
    let span = ((hi.x - lo.x).max(hi.y - lo.y) + 2.0 * margin) / 0.7;
    let pitch = span / (MAX_SCREEN_SIDE - 1) as f64;
    Grid2D::new(MAX_SCREEN_SIDE, MAX_SCREEN_SIDE, pitch, (lo + hi) * 0.5)
}

impl Simulation {
    pub fn new(setup: SimulationSetup) -> Result<Self> {
        let support = setup.mask.support();
        let object_grid = *setup.mask.grid();
        let object_points: Vec<Point2> = support
            .iter()
            .map(|&(i, _)| {
                let (ix, iy) = object_grid.coords_of(i);
                object_grid.point(ix, iy)
            })
            .collect();
        let reference_points: Vec<Point2> = setup.reference.points().collect();
        let positions = setup.sources.positions();
        let bucket = Propagator::new(&setup.optics, positions, &object_points);
        let reference = Propagator::new(&setup.optics, positions, &reference_points);

        let model = setup.model;
        let f = model.screen_position_fraction();
        let turbulence = if model.is_vacuum() {
            Turbulence::None
        } else if f == 0.0 {
            let grid = screen_grid_for_sources(&setup.sources, model.rho0())?;
            let spec = ScreenSpec::for_source(grid, setup.sources.diameter())?;
            Turbulence::SourcePlane(ScreenGenerator::new(&spec, &model)?)
        } else if f == 1.0 {
            Turbulence::DetectorPlane
        } else {
            let grid = intermediate_screen_grid(&setup)?;
            let spec = ScreenSpec::for_source(grid, setup.sources.diameter())?;
            Turbulence::Intermediate(ScreenGenerator::new(&spec, &model)?)
        };

        Ok(Simulation {
            setup,
            support,
            bucket,
            reference,
            turbulence,
        })
    }

    pub fn setup(&self) -> &SimulationSetup {
        &self.setup
    }

    fn screens(&self, generator: &ScreenGenerator, frame: u64) -> (PhaseScreen, PhaseScreen) {
        let (bucket, reference) = generator.generate_pair(rng::derive_seed(self.setup.seed, &[rng::tag::SCREENS, frame]));
        if self.setup.model.paths_independent() {
            (bucket, reference)
        } else {
            (bucket.clone(), bucket)
        }
    }

    /// Bucket value and reference intensity map for one frame.
    pub fn frame(&self, index: u64) -> Result<(f64, Vec<f64>)> {
        let setup = &self.setup;
        let amplitudes = sample_frame(&setup.sources, setup.seed, index).amplitudes;
        let pitch = setup.mask.grid().pitch();
        let area = pitch * pitch;
        let mut intensity = vec![0.0; setup.reference.len()];

        let bucket_from = |object_intensity: &dyn Fn(usize, usize) -> f64| -> f64 {
            self.support
                .iter()
                .enumerate()
                .map(|(k, &(i, t))| object_intensity(k, i) * t)
                .sum::<f64>()
                * area
        };

        let bucket = match &self.turbulence {
            Turbulence::None | Turbulence::DetectorPlane => {
                let mut obj = vec![0.0; self.support.len()];
                self.bucket.intensity_into(&amplitudes, &mut obj);
                self.reference.intensity_into(&amplitudes, &mut intensity);
                bucket_from(&|k, _| obj[k])
            }
            Turbulence::SourcePlane(generator) => {
                let (phi_b, phi_p) = self.screens(generator, index);
                let screened_b = apply_source_screen(&amplitudes, &setup.sources, &phi_b)?;
                let screened_p = apply_source_screen(&amplitudes, &setup.sources, &phi_p)?;
                let mut obj = vec![0.0; self.support.len()];
                self.bucket.intensity_into(&screened_b, &mut obj);
                self.reference.intensity_into(&screened_p, &mut intensity);
                bucket_from(&|k, _| obj[k])
            }
            Turbulence::Intermediate(generator) => {
                let (phi_b, phi_p) = self.screens(generator, index);
                let object = propagate_subsources(
                    &amplitudes,
                    &setup.sources,
                    Some(&phi_b),
                    &setup.model,
                    setup.mask.grid(),
                    &setup.optics,
                )?;
                let reference = propagate_subsources(
                    &amplitudes,
                    &setup.sources,
                    Some(&phi_p),
                    &setup.model,
                    &setup.reference,
                    &setup.optics,
                )?;
                for (o, u) in intensity.iter_mut().zip(reference.values()) {
                    *o = u.norm_sqr();
                }
                let values: &[Complex64] = object.values();
                bucket_from(&|_, i| values[i].norm_sqr())
            }
        };
        Ok((bucket, intensity))
    }

    pub fn run_range(&self, frames: std::ops::Range<u64>) -> Result<GhostImageEstimate> {
        let mut estimate = GhostImageEstimate::new(self.setup.reference);
        for index in frames {
            let (bucket, intensity) = self.frame(index)?;
            estimate.accumulate(bucket, &intensity)?;
        }
        Ok(estimate)
    }

    pub fn run(&self) -> Result<GhostImageEstimate> {
        let total = self.setup.frames;
        let chunks = total.div_ceil(CHUNK_FRAMES);
        let partials = (0..chunks)
            .into_par_iter()
            .map(|c| self.run_range(c * CHUNK_FRAMES..((c + 1) * CHUNK_FRAMES).min(total)))
            .collect::<Result<Vec<_>>>()?;
        let mut estimate = GhostImageEstimate::new(self.setup.reference);
        for partial in &partials {
            estimate.merge(partial)?;
        }
        Ok(estimate)
    }
}

pub fn run_simulation(setup: SimulationSetup) -> Result<GhostImageEstimate> {
    if setup.frames < 2 {
        return Err(Error::InsufficientData { frames: setup.frames });
    }
    Simulation::new(setup)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::make_source_grid;

    fn small_setup(model: TurbulenceModel, frames: u64) -> SimulationSetup {
        let grid = Grid2D::square(9, 40e-6).unwrap();
        SimulationSetup {
            optics: OpticalConfig::new(780e-9, 1.4).unwrap(),
            sources: make_source_grid(3e-3, 1e-3).unwrap(),
            model,
            mask: ObjectMask::point(grid),
            reference: grid,
            frames,
            seed: 17,
        }
    }

    #[test]
    fn screen_grid_resolves_rho0_and_hits_lattice() {
        let sources = make_source_grid(11e-3, 11e-3 / 16.0).unwrap();
        let g = screen_grid_for_sources(&sources, 2e-3).unwrap();
        assert!(g.pitch() < 0.5e-3);
        assert!((g.pitch() - 11e-3 / 32.0).abs() < 1e-15);
        for &p in sources.positions() {
            let (fx, fy) = g.fractional_index(p);
            assert!((fx - fx.round()).abs() < 1e-9 && (fy - fy.round()).abs() < 1e-9);
        }
        let coarse = screen_grid_for_sources(&sources, 0.05).unwrap();
        assert_eq!(coarse.pitch(), 11e-3 / 16.0);
    }

    #[test]
    fn result_is_independent_of_chunking() {
        let sim = Simulation::new(small_setup(TurbulenceModel::source_plane(4e-3).unwrap(), 150)).unwrap();
        let all = sim.run().unwrap();
        let mut sequential = sim.run_range(0..150).unwrap();
        assert_eq!(all.frames(), 150);
        // Different association order: equal to rounding only.
        let a = all.finalize().unwrap();
        let b = sequential.finalize().unwrap();
        for (x, y) in a.ghost.values().iter().zip(b.ghost.values()) {
            assert!((x - y).abs() <= 1e-10 * a.background.values()[0].abs());
        }
        sequential.merge(&GhostImageEstimate::new(*sequential.grid())).unwrap();
        assert_eq!(sequential.frames(), 150);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let threaded = pool.install(|| sim.run().unwrap());
        assert_eq!(threaded, all);
    }

    #[test]
    fn detector_screen_run_equals_vacuum_run() {
        let vac = run_simulation(small_setup(TurbulenceModel::vacuum(), 64)).unwrap();
        let det = run_simulation(small_setup(TurbulenceModel::new(1e-3, 1.0, true).unwrap(), 64)).unwrap();
        assert_eq!(vac, det);
    }

    #[test]
    fn shared_screens_cancel_source_plane_turbulence() {
        // With the same screen on both paths the per-frame bucket and
        // reference see identical source phases; only the vacuum image's
        // correlations survive.
        let frames = 2000;
        let vac = run_simulation(small_setup(TurbulenceModel::vacuum(), frames)).unwrap().finalize().unwrap();
        let shared = run_simulation(small_setup(TurbulenceModel::new(0.5e-3, 0.0, false).unwrap(), frames))
            .unwrap()
            .finalize()
            .unwrap();
        let independent = run_simulation(small_setup(TurbulenceModel::new(0.5e-3, 0.0, true).unwrap(), frames))
            .unwrap()
            .finalize()
            .unwrap();
        let c = shared.ghost.grid().index(4, 4);
        let peak_vac = vac.ghost.values()[c];
        assert!((shared.ghost.values()[c] - peak_vac).abs() < 5.0 * shared.stderr.values()[c]);
        assert!(independent.ghost.values()[c] < 0.5 * peak_vac);
    }

    #[test]
    fn too_few_frames() {
        assert!(matches!(
            run_simulation(small_setup(TurbulenceModel::vacuum(), 1)),
            Err(Error::InsufficientData { frames: 1 })
        ));
    }
}
