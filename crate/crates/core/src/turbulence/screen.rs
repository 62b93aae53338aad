//! Thin phase screens with a square-law structure function.
//!
//! Screens are stationary Gaussian fields with covariance
//! `C(r) = σ² exp(−|r|²/ℓ²)`, synthesized spectrally on a periodic grid at
//! least `3ℓ` wide and cropped to the requested sampling grid. The
//! structure function is then `D(r) = 2σ²(1 − exp(−|r|²/ℓ²))`, and with
//! `σ² = ℓ²/(2ρ₀²)` it follows `|r|²/ρ₀²` to within `(r/ℓ)²/2` relative
//! for `|r| ≪ ℓ`. One path's screen therefore contributes
//! `⟨exp(iΔφ)⟩ = exp(−|r|²/(2ρ₀²))`; the independent bucket and reference
//! screens together give the `exp(−|r|²/ρ₀²)` coherence factor.
//!
//! Beyond `ℓ/3` the structure function saturates at `2σ²`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

use super::TurbulenceModel;
use crate::error::{Error, Result};
use crate::geometry::{Grid2D, Point2};
use crate::rng;

/// Output sampling plus the covariance scale ℓ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenSpec {
    grid: Grid2D,
    correlation_length: f64,
}

impl ScreenSpec {
    pub fn new(grid: Grid2D, correlation_length: f64) -> Result<Self> {
        if !(correlation_length.is_finite() && correlation_length > 0.0) {
            return Err(Error::param(
                "turbulence",
                "correlation_length",
                format!("must be positive, got {correlation_length}"),
            ));
        }
        Ok(ScreenSpec {
            grid,
            correlation_length,
        })
    }

    /// ℓ = max(4·D, 8·pitch): the square law then holds out to separations
    /// beyond the source diameter D.
    pub fn for_source(grid: Grid2D, source_diameter: f64) -> Result<Self> {
        Self::new(grid, (4.0 * source_diameter).max(8.0 * grid.pitch()))
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn correlation_length(&self) -> f64 {
        self.correlation_length
    }
}

/// One realization of turbulence phase (radians) on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScreen {
    grid: Grid2D,
    phase: Vec<f64>,
    rho0_target: f64,
    correlation_length: f64,
    variance: f64,
    seed: u64,
}

impl PhaseScreen {
    pub fn zeros(grid: Grid2D) -> Self {
        PhaseScreen {
            phase: vec![0.0; grid.len()],
            grid,
            rho0_target: f64::INFINITY,
            correlation_length: f64::INFINITY,
            variance: 0.0,
            seed: 0,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn rho0_target(&self) -> f64 {
        self.rho0_target
    }

    pub fn correlation_length(&self) -> f64 {
        self.correlation_length
    }

    /// Point variance σ² in rad².
    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Ensemble structure function this screen was drawn from.
    pub fn model_structure_function(&self, r: f64) -> f64 {
        if self.variance == 0.0 {
            return 0.0;
        }
        let ell = self.correlation_length;
        -2.0 * self.variance * (-(r * r) / (ell * ell)).exp_m1()
    }

    /// Bilinear interpolation; `None` outside the sampled rectangle.
    pub fn sample(&self, p: Point2) -> Option<f64> {
        if !self.grid.contains(p) {
            return None;
        }
        let (fx, fy) = self.grid.fractional_index(p);
        let nx = self.grid.nx();
        let ny = self.grid.ny();
        let fx = fx.clamp(0.0, (nx - 1) as f64);
        let fy = fy.clamp(0.0, (ny - 1) as f64);
        let x0 = (fx.floor() as usize).min(nx.saturating_sub(2));
        let y0 = (fy.floor() as usize).min(ny.saturating_sub(2));
        let x1 = (x0 + 1).min(nx - 1);
        let y1 = (y0 + 1).min(ny - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        let at = |ix, iy| self.phase[self.grid.index(ix, iy)];
        let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
        let bottom = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
        Some(top * (1.0 - ty) + bottom * ty)
    }
}

/// Smallest 2^a·3^b ≥ n.
fn smooth_size(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p3 = 1;
    while p3 < best {
        let mut m = p3;
        while m < n {
            m *= 2;
        }
        best = best.min(m);
        p3 *= 3;
    }
    best
}

/// Reusable spectral synthesizer for one (spec, model) pair.
///
/// Each call to [`ScreenGenerator::generate_pair`] costs one complex 2-D
/// FFT and yields two independent screens (real and imaginary parts).
pub struct ScreenGenerator {
    spec: ScreenSpec,
    rho0: f64,
    variance: f64,
    fft_nx: usize,
    fft_ny: usize,
    amplitude: Vec<f64>,
    row_fft: Arc<dyn Fft<f64>>,
    col_fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ScreenGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScreenGenerator")
            .field("spec", &self.spec)
            .field("rho0", &self.rho0)
            .field("fft_nx", &self.fft_nx)
            .field("fft_ny", &self.fft_ny)
            .finish()
    }
}

impl ScreenGenerator {
    pub fn new(spec: &ScreenSpec, model: &TurbulenceModel) -> Result<Self> {
        let rho0 = model.rho0();
        let grid = spec.grid;
        let pitch = grid.pitch();
        if rho0.is_finite() && pitch >= rho0 / 4.0 {
            return Err(Error::config(
                "turbulence",
                format!(
                    "screen pitch {pitch:.3e} m does not resolve rho0 = {rho0:.3e} m; \
                     pitch must be below {:.3e} m",
                    rho0 / 4.0
                ),
            ));
        }
        let ell = spec.correlation_length;
        let variance = if rho0.is_finite() {
            ell * ell / (2.0 * rho0 * rho0)
        } else {
            0.0
        };
        let min_span = (3.0 * ell / pitch).ceil() as usize + 1;
        let fft_nx = smooth_size(grid.nx().max(min_span));
        let fft_ny = smooth_size(grid.ny().max(min_span));

        // Spectral density of σ² exp(−r²/ℓ²): σ²ℓ²/(4π) exp(−κ²ℓ²/4).
        let dkx = 2.0 * PI / (fft_nx as f64 * pitch);
        let dky = 2.0 * PI / (fft_ny as f64 * pitch);
        let signed = |i: usize, n: usize| if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
        let mut amplitude = Vec::with_capacity(fft_nx * fft_ny);
        for iy in 0..fft_ny {
            let ky = signed(iy, fft_ny) * dky;
            for ix in 0..fft_nx {
                let kx = signed(ix, fft_nx) * dkx;
                let density = variance * ell * ell / (4.0 * PI)
                    * (-(kx * kx + ky * ky) * ell * ell / 4.0).exp();
                amplitude.push((density * dkx * dky).sqrt());
            }
        }

        let mut planner = FftPlanner::new();
        Ok(ScreenGenerator {
            spec: *spec,
            rho0,
            variance,
            fft_nx,
            fft_ny,
            amplitude,
            row_fft: planner.plan_fft_inverse(fft_nx),
            col_fft: planner.plan_fft_inverse(fft_ny),
        })
    }

    pub fn fft_shape(&self) -> (usize, usize) {
        (self.fft_nx, self.fft_ny)
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn generate_pair(&self, seed: u64) -> (PhaseScreen, PhaseScreen) {
        let grid = self.spec.grid;
        let make = |phase: Vec<f64>| PhaseScreen {
            grid,
            phase,
            rho0_target: self.rho0,
            correlation_length: self.spec.correlation_length,
            variance: self.variance,
            seed,
        };
        if self.variance == 0.0 {
            return (make(vec![0.0; grid.len()]), make(vec![0.0; grid.len()]));
        }

        let (nx, ny) = (self.fft_nx, self.fft_ny);
        let mut rng = rng::stream(seed, &[]);
        let mut spectrum: Vec<Complex64> = self
            .amplitude
            .iter()
            .map(|&a| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(a * re, a * im)
            })
            .collect();

        self.row_fft.process(&mut spectrum);
        // Transpose so columns become contiguous rows of length ny.
        let mut transposed = vec![Complex64::new(0.0, 0.0); nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                transposed[ix * ny + iy] = spectrum[iy * nx + ix];
            }
        }
        self.col_fft.process(&mut transposed);

        let mut real = Vec::with_capacity(grid.len());
        let mut imag = Vec::with_capacity(grid.len());
        for iy in 0..grid.ny() {
            for ix in 0..grid.nx() {
                let z = transposed[ix * ny + iy];
                real.push(z.re);
                imag.push(z.im);
            }
        }
        (make(real), make(imag))
    }

    pub fn generate(&self, seed: u64) -> PhaseScreen {
        self.generate_pair(seed).0
    }
}

/// One square-law screen; a vacuum model yields an all-zero screen.
pub fn generate_phase_screen(spec: &ScreenSpec, model: &TurbulenceModel, seed: u64) -> Result<PhaseScreen> {
    Ok(ScreenGenerator::new(spec, model)?.generate(seed))
}

/// Two independent, identically distributed screens from one seed.
pub fn generate_phase_screen_pair(
    spec: &ScreenSpec,
    model: &TurbulenceModel,
    seed: u64,
) -> Result<(PhaseScreen, PhaseScreen)> {
    Ok(ScreenGenerator::new(spec, model)?.generate_pair(seed))
}

/// Sample structure function with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureEstimate {
    pub value: f64,
    pub stderr: f64,
    pub pairs: usize,
}

/// Mean of `[φ(ρ + r) − φ(ρ)]²` over every pixel pair at offset
/// `r = (dx, dy)` and every screen. The standard error treats screens as
/// independent and pixels within a screen as correlated.
pub fn structure_function_estimate(screens: &[PhaseScreen], dx: f64, dy: f64) -> Result<StructureEstimate> {
    if screens.len() < 2 {
        return Err(Error::param(
            "turbulence",
            "screens",
            format!("need at least 2 screens, got {}", screens.len()),
        ));
    }
    let grid = *screens[0].grid();
    if let Some(bad) = screens.iter().position(|s| !s.grid().same_sampling(&grid)) {
        return Err(Error::GridMismatch {
            module: "turbulence",
            reason: format!("screen {bad} is sampled differently from screen 0"),
        });
    }
    let pitch = grid.pitch();
    let to_shift = |d: f64| -> Result<isize> {
        let s = d / pitch;
        if (s - s.round()).abs() > 1e-6 {
            return Err(Error::OffGrid {
                dx,
                dy,
                lower: (dx / pitch).floor() * pitch,
                upper: (dx / pitch).ceil() * pitch,
            });
        }
        Ok(s.round() as isize)
    };
    let (sx, sy) = (to_shift(dx)?, to_shift(dy)?);
    let (nx, ny) = (grid.nx() as isize, grid.ny() as isize);
    if sx.abs() >= nx || sy.abs() >= ny {
        return Err(Error::param(
            "turbulence",
            "separation",
            format!("offset ({sx}, {sy}) px exceeds the {nx}x{ny} grid"),
        ));
    }

    let x_range = (0.max(-sx))..(nx.min(nx - sx));
    let y_range = (0.max(-sy))..(ny.min(ny - sy));
    let pairs = x_range.len() * y_range.len();
    let per_screen: Vec<f64> = screens
        .iter()
        .map(|screen| {
            let phase = screen.phase();
            let mut acc = 0.0;
            for iy in y_range.clone() {
                for ix in x_range.clone() {
                    let a = phase[(iy * nx + ix) as usize];
                    let b = phase[((iy + sy) * nx + ix + sx) as usize];
                    acc += (b - a) * (b - a);
                }
            }
            acc / pairs as f64
        })
        .collect();
    let n = per_screen.len() as f64;
    let mean = per_screen.iter().sum::<f64>() / n;
    let var = per_screen.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(StructureEstimate {
        value: mean,
        stderr: (var / n).sqrt(),
        pairs: pairs * screens.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, pitch: f64, ell: f64) -> ScreenSpec {
        ScreenSpec::new(Grid2D::square(n, pitch).unwrap(), ell).unwrap()
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(1), 1);
        assert_eq!(smooth_size(5), 6);
        assert_eq!(smooth_size(97), 108);
        assert_eq!(smooth_size(129), 144);
        assert_eq!(smooth_size(256), 256);
    }

    #[test]
    fn vacuum_screen_is_zero() {
        let s = generate_phase_screen(&spec(16, 1e-3, 8e-3), &TurbulenceModel::vacuum(), 3).unwrap();
        assert!(s.phase().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn coarse_pitch_is_rejected() {
        let model = TurbulenceModel::source_plane(2e-3).unwrap();
        let err = generate_phase_screen(&spec(16, 0.5e-3, 8e-3), &model, 1).unwrap_err();
        assert!(matches!(err, Error::Configuration { .. }));
        assert!(err.to_string().contains("5.000e-4"), "{err}");
    }

    #[test]
    fn same_seed_same_screen() {
        let model = TurbulenceModel::source_plane(10e-3).unwrap();
        let sp = spec(24, 1e-3, 16e-3);
        let a = generate_phase_screen_pair(&sp, &model, 42).unwrap();
        let b = generate_phase_screen_pair(&sp, &model, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_phase_screen(&sp, &model, 43).unwrap();
        assert_ne!(a.0, c);
        assert_ne!(a.0.phase(), a.1.phase());
    }

    #[test]
    fn correlation_length_default() {
        let g = Grid2D::square(8, 1e-3).unwrap();
        assert_eq!(ScreenSpec::for_source(g, 11e-3).unwrap().correlation_length(), 44e-3);
        assert_eq!(ScreenSpec::for_source(g, 1e-3).unwrap().correlation_length(), 8e-3);
    }

    #[test]
    fn bilinear_sampling_hits_nodes_and_interpolates() {
        let g = Grid2D::square(3, 1.0).unwrap();
        let mut s = PhaseScreen::zeros(g);
        s.phase = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        assert_eq!(s.sample(g.point(2, 1)), Some(5.0));
        assert!((s.sample(Point2::new(-0.5, -0.5)).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(s.sample(Point2::new(1.5, 0.0)), None);
    }

    #[test]
    fn structure_function_trivial_cases() {
        let g = Grid2D::square(8, 1e-3).unwrap();
        let zeros = vec![PhaseScreen::zeros(g); 3];
        let est = structure_function_estimate(&zeros, 2e-3, 0.0).unwrap();
        assert_eq!((est.value, est.stderr), (0.0, 0.0));

        let model = TurbulenceModel::source_plane(8e-3).unwrap();
        let sp = ScreenSpec::new(g, 16e-3).unwrap();
        let screens: Vec<_> = (0..4).map(|s| generate_phase_screen(&sp, &model, s).unwrap()).collect();
        assert_eq!(structure_function_estimate(&screens, 0.0, 0.0).unwrap().value, 0.0);

        let err = structure_function_estimate(&screens, 1.5e-3, 0.0).unwrap_err();
        match err {
            Error::OffGrid { lower, upper, .. } => {
                assert!((lower - 1e-3).abs() < 1e-15 && (upper - 2e-3).abs() < 1e-15)
            }
            other => panic!("{other}"),
        }
        assert!(structure_function_estimate(&screens[..1], 1e-3, 0.0).is_err());
        let other = PhaseScreen::zeros(Grid2D::square(9, 1e-3).unwrap());
        assert!(structure_function_estimate(&[screens[0].clone(), other], 1e-3, 0.0).is_err());
    }
}
