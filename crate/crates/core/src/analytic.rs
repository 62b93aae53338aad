//! Closed-form second-order coherence under square-law turbulence.
//!
//! For subsources m, m' with mean powers P, P' the averaged two-photon
//! term is
//!
//! ```text
//! G(m, m') = 2 (π ρ_s² / λL)⁴ P P'
//!            × [1 + Re(e^{ik(ρ_b − ρ_p)·(ρ_m − ρ_m')/L} e^{−|ρ_m − ρ_m'|²/ρ₀²})]
//! ```
//!
//! The constant part produces the featureless background; the oscillating
//! part, summed over pairs, is the ghost image. Pairs farther apart than ρ₀
//! drop out of the image, which is why resolution survives turbulence only
//! while the source diameter is below ρ₀.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{Grid2D, ImageMap, Point2};
use crate::optics::OpticalConfig;
use crate::source::SubsourceSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceParams {
    pub optics: OpticalConfig,
    /// Turbulence coherence length; `f64::INFINITY` for vacuum.
    pub rho0: f64,
    /// Radius ρ_s in the (πρ_s²)⁴ prefactor. Only scales the result.
    pub source_radius: f64,
    pub power_m: f64,
    pub power_m_prime: f64,
}

impl CoherenceParams {
    pub fn new(optics: OpticalConfig, rho0: f64, source_radius: f64, power_m: f64, power_m_prime: f64) -> Result<Self> {
        if rho0.is_nan() || rho0 <= 0.0 {
            return Err(Error::param("analytic", "rho0", format!("must be positive or infinite, got {rho0}")));
        }
        for (name, v) in [
            ("source_radius", source_radius),
            ("power_m", power_m),
            ("power_m_prime", power_m_prime),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param("analytic", name, format!("must be positive, got {v}")));
            }
        }
        Ok(CoherenceParams {
            optics,
            rho0,
            source_radius,
            power_m,
            power_m_prime,
        })
    }

    /// Unit powers and ρ_s = 1/√π, so the prefactor is 2/(λL)⁴.
    pub fn normalized(optics: OpticalConfig, rho0: f64) -> Result<Self> {
        Self::new(optics, rho0, 1.0 / PI.sqrt(), 1.0, 1.0)
    }

    fn prefactor(&self) -> f64 {
        let a = PI * self.source_radius * self.source_radius
            / (self.optics.wavelength() * self.optics.path_length());
        2.0 * a.powi(4) * self.power_m * self.power_m_prime
    }
}

/// e^{−|Δρ|²/ρ₀²}, or 1 without turbulence.
pub fn coherence_factor(separation: f64, rho0: f64) -> f64 {
    if rho0.is_infinite() {
        1.0
    } else {
        (-(separation * separation) / (rho0 * rho0)).exp()
    }
}

/// The bracketed factor `1 + Re(...)`; always within [0, 2].
pub fn bracket(rho_b: Point2, rho_p: Point2, rho_m: Point2, rho_m_prime: Point2, optics: &OpticalConfig, rho0: f64) -> f64 {
    let d = rho_m - rho_m_prime;
    let phase = optics.wave_number() * (rho_b - rho_p).dot(d) / optics.path_length();
    1.0 + phase.cos() * coherence_factor(d.norm(), rho0)
}

pub fn glauber_pair_term(
    rho_b: Point2,
    rho_p: Point2,
    rho_m: Point2,
    rho_m_prime: Point2,
    params: &CoherenceParams,
) -> f64 {
    params.prefactor() * bracket(rho_b, rho_p, rho_m, rho_m_prime, &params.optics, params.rho0)
}

/// ⟨I_b(ρ_b) I_p(ρ_p)⟩ for equal-power subsources: ½ Σ_{m,m'} G(m, m').
///
/// The ½ undoes the double counting of ordered pairs; the m = m' terms
/// then carry the circular-Gaussian fourth moment 2P².
pub fn total_coherence(rho_b: Point2, rho_p: Point2, sources: &SubsourceSet, params: &CoherenceParams) -> f64 {
    let params = CoherenceParams {
        power_m: sources.power(),
        power_m_prime: sources.power(),
        ..*params
    };
    let pos = sources.positions();
    let mut sum = 0.0;
    for &a in pos {
        for &b in pos {
            sum += glauber_pair_term(rho_b, rho_p, a, b, &params);
        }
    }
    0.5 * sum
}

/// Ghost image predicted for a point object at `rho_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedGhost {
    /// Σ_{m,m'} Re(e^{ik(ρ_b − ρ_p)·(ρ_m − ρ_m')/L} e^{−|ρ_m − ρ_m'|²/ρ₀²}).
    pub image: ImageMap,
    /// The constant term in the same units: Σ_{m,m'} 1 = M².
    pub background: f64,
}

pub fn predicted_ghost_image(rho_b: Point2, sources: &SubsourceSet, dst: &Grid2D, params: &CoherenceParams) -> PredictedGhost {
    let pos = sources.positions();
    let m = pos.len();
    let mut weight = vec![0.0; m * m];
    for (i, &a) in pos.iter().enumerate() {
        for (j, &b) in pos.iter().enumerate() {
            weight[i * m + j] = coherence_factor((a - b).norm(), params.rho0);
        }
    }
    let diagonal: f64 = (0..m).map(|i| weight[i * m + i]).sum();
    let k_over_l = params.optics.wave_number() / params.optics.path_length();
    let mut phasors = vec![Complex64::new(0.0, 0.0); m];
    let image = ImageMap::from_fn(*dst, |ix, iy| {
        let q = (rho_b - dst.point(ix, iy)) * k_over_l;
        for (z, &p) in phasors.iter_mut().zip(pos) {
            *z = Complex64::from_polar(1.0, q.dot(p));
        }
        let mut off = 0.0;
        for i in 0..m {
            let zi = phasors[i];
            let row = &weight[i * m..(i + 1) * m];
            for j in (i + 1)..m {
                let zj = phasors[j];
                off += row[j] * (zi.re * zj.re + zi.im * zj.im);
            }
        }
        diagonal + 2.0 * off
    });
    PredictedGhost {
        image,
        background: (m * m) as f64,
    }
}

/// Amplitudes and turbulence phases entering the two-photon interference
/// term with source-plane dependence restored. Index 1 is the object /
/// bucket path, 2 the reference path; `k` and `kp` are the two
/// source-plane points κ and κ'.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhotonPhases {
    pub g1_k: Complex64,
    pub g1_kp: Complex64,
    pub g2_k: Complex64,
    pub g2_kp: Complex64,
    pub dphi1_k: f64,
    pub dphi1_kp: f64,
    pub dphi2_k: f64,
    pub dphi2_kp: f64,
}

impl TwoPhotonPhases {
    pub fn without_turbulence(g1_k: Complex64, g1_kp: Complex64, g2_k: Complex64, g2_kp: Complex64) -> Self {
        TwoPhotonPhases {
            g1_k,
            g1_kp,
            g2_k,
            g2_kp,
            dphi1_k: 0.0,
            dphi1_kp: 0.0,
            dphi2_k: 0.0,
            dphi2_kp: 0.0,
        }
    }

    /// Δφ_j(ρ_j, κ) − Δφ_j(ρ_j, κ') for j = 1, 2.
    pub fn source_dependence(&self) -> (f64, f64) {
        (self.dphi1_k - self.dphi1_kp, self.dphi2_k - self.dphi2_kp)
    }
}

/// |g₂(κ)e^{iΔφ₂(κ)} g₁(κ')e^{iΔφ₁(κ')} + g₂(κ')e^{iΔφ₂(κ')} g₁(κ)e^{iΔφ₁(κ)}|².
pub fn corrected_mds_lhs(p: &TwoPhotonPhases) -> f64 {
    let e = |phi: f64| Complex64::from_polar(1.0, phi);
    let a = p.g2_k * e(p.dphi2_k) * p.g1_kp * e(p.dphi1_kp);
    let b = p.g2_kp * e(p.dphi2_kp) * p.g1_k * e(p.dphi1_k);
    (a + b).norm_sqr()
}

/// The same quantity with all turbulence phases removed.
pub fn turbulence_free_lhs(p: &TwoPhotonPhases) -> f64 {
    (p.g2_k * p.g1_kp + p.g2_kp * p.g1_k).norm_sqr()
}

/// One row of the cancellation demonstration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CancellationRow {
    pub label: &'static str,
    pub draws: u64,
    pub mean_corrected: f64,
    pub mean_turbulence_free: f64,
    /// Largest |corrected − free| / free over the draws.
    pub max_relative_deviation: f64,
}

/// Monte Carlo contrast between turbulence phases that do and do not depend
/// on the source point.
///
/// Rows, in order:
/// * `kappa_independent`: random magnitudes and geometric phases with one
///   turbulence phase per path; the corrected LHS equals the
///   turbulence-free value draw by draw.
/// * `kappa_independent_unit`: unit magnitudes, zero geometric phases, one
///   uniform phase per path; every draw gives 4.
/// * `kappa_dependent_unit`: as above but four independent uniform phases,
///   so the interference term averages away and the mean is 2.
pub fn cancellation_demo(seed: u64, draws: u64) -> [CancellationRow; 3] {
    use rand::Rng;
    use rand_distr::Uniform;

    let mut rng = crate::rng::stream(seed, &[]);
    let angle = Uniform::new(0.0, 2.0 * PI).expect("valid range");
    let magnitude = Uniform::new(0.1, 2.0).expect("valid range");
    let one = Complex64::new(1.0, 0.0);

    let mut run = |label: &'static str, draw: &mut dyn FnMut(&mut rand_chacha::ChaCha8Rng) -> TwoPhotonPhases| {
        let (mut sum_c, mut sum_f, mut worst) = (0.0, 0.0, 0.0f64);
        for _ in 0..draws {
            let p = draw(&mut rng);
            let (c, f) = (corrected_mds_lhs(&p), turbulence_free_lhs(&p));
            sum_c += c;
            sum_f += f;
            if f > 0.0 {
                worst = worst.max((c - f).abs() / f);
            }
        }
        CancellationRow {
            label,
            draws,
            mean_corrected: sum_c / draws as f64,
            mean_turbulence_free: sum_f / draws as f64,
            max_relative_deviation: worst,
        }
    };

    let random = run("kappa_independent", &mut |rng| {
        let mut g = || Complex64::from_polar(rng.sample(magnitude), rng.sample(angle));
        let mut p = TwoPhotonPhases::without_turbulence(g(), g(), g(), g());
        let (a, b) = (rng.sample(angle), rng.sample(angle));
        (p.dphi1_k, p.dphi1_kp, p.dphi2_k, p.dphi2_kp) = (a, a, b, b);
        p
    });
    let unit = run("kappa_independent_unit", &mut |rng| {
        let mut p = TwoPhotonPhases::without_turbulence(one, one, one, one);
        let (a, b) = (rng.sample(angle), rng.sample(angle));
        (p.dphi1_k, p.dphi1_kp, p.dphi2_k, p.dphi2_kp) = (a, a, b, b);
        p
    });
    let dependent = run("kappa_dependent_unit", &mut |rng| {
        let mut p = TwoPhotonPhases::without_turbulence(one, one, one, one);
        (p.dphi1_k, p.dphi1_kp, p.dphi2_k, p.dphi2_kp) =
            (rng.sample(angle), rng.sample(angle), rng.sample(angle), rng.sample(angle));
        p
    });
    [random, unit, dependent]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Immunity {
    /// Strictly `D < ρ₀`.
    pub immune: bool,
    /// ρ₀ / D.
    pub margin: f64,
}

pub fn immunity_for_diameter(diameter: f64, rho0: f64) -> Immunity {
    Immunity {
        immune: diameter < rho0,
        margin: rho0 / diameter,
    }
}

/// Turbulence immunity holds only when max |ρ_m − ρ_m'| < ρ₀.
pub fn immunity_criterion(sources: &SubsourceSet, rho0: f64) -> Immunity {
    immunity_for_diameter(sources.diameter(), rho0)
}
