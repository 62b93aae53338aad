//! Pseudothermal source: statistically independent subsources whose
//! per-frame amplitudes are circular complex Gaussian.

use num_complex::Complex64;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SubsourceSet {
    positions: Vec<Point2>,
    power: f64,
    diameter: f64,
    lattice_pitch: Option<f64>,
}

impl SubsourceSet {
    /// Arbitrary subsource positions, each with mean power `power`.
    pub fn from_positions(positions: Vec<Point2>, power: f64) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::config(
                "source",
                format!("{} subsource(s); at least 2 are required", positions.len()),
            ));
        }
        if !(power.is_finite() && power > 0.0) {
            return Err(Error::param("source", "power", format!("must be positive, got {power}")));
        }
        if positions.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::param("source", "positions", "must be finite"));
        }
        let diameter = max_pairwise_distance(&positions);
        Ok(SubsourceSet {
            positions,
            power,
            diameter,
            lattice_pitch: None,
        })
    }

    pub fn positions(&self) -> &[Point2] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Mean power ⟨|E_m|²⟩ of every subsource.
    pub fn power(&self) -> f64 {
        self.power
    }

    /// max over pairs of |ρ_m − ρ_m'|.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn lattice_pitch(&self) -> Option<f64> {
        self.lattice_pitch
    }

    pub fn with_power(mut self, power: f64) -> Result<Self> {
        if !(power.is_finite() && power > 0.0) {
            return Err(Error::param("source", "power", format!("must be positive, got {power}")));
        }
        self.power = power;
        Ok(self)
    }

    pub fn bounding_box(&self) -> (Point2, Point2) {
        self.positions.iter().fold(
            (
                Point2::new(f64::INFINITY, f64::INFINITY),
                Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
            ),
            |(lo, hi), p| {
                (
                    Point2::new(lo.x.min(p.x), lo.y.min(p.y)),
                    Point2::new(hi.x.max(p.x), hi.y.max(p.y)),
                )
            },
        )
    }
}

fn max_pairwise_distance(points: &[Point2]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            best = best.max((a - b).norm_sqr());
        }
    }
    best.sqrt()
}

/// Square lattice of pitch `pitch` through the origin, clipped to the disc
/// of diameter `diameter`. The recorded diameter is the realized maximum
/// pairwise distance, which can be slightly below the nominal one.
pub fn make_source_grid(diameter: f64, pitch: f64) -> Result<SubsourceSet> {
    if !(diameter.is_finite() && diameter > 0.0) {
        return Err(Error::param("source", "diameter", format!("must be positive, got {diameter}")));
    }
    if !(pitch.is_finite() && pitch > 0.0 && pitch <= diameter) {
        return Err(Error::param(
            "source",
            "pitch",
            format!("must lie in (0, {diameter}], got {pitch}"),
        ));
    }
    let radius = diameter / 2.0;
    let r2 = radius * radius * (1.0 + 1e-12);
    let n = (radius / pitch).floor() as i64;
    let positions: Vec<Point2> = (-n..=n)
        .flat_map(|j| (-n..=n).map(move |i| Point2::new(i as f64 * pitch, j as f64 * pitch)))
        .filter(|p| p.norm_sqr() <= r2)
        .collect();
    if positions.len() < 2 {
        return Err(Error::config(
            "source",
            format!(
                "lattice pitch {pitch} m leaves {} subsource(s) inside a {diameter} m disc; use a smaller pitch",
                positions.len()
            ),
        ));
    }
    let mut set = SubsourceSet::from_positions(positions, 1.0)?;
    set.lattice_pitch = Some(pitch);
    Ok(set)
}

/// One frame of subsource amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    pub amplitudes: Vec<Complex64>,
    pub frame_index: u64,
    pub seed: u64,
}

/// Independent circular complex Gaussian amplitudes with ⟨|E_m|²⟩ = P,
/// keyed by `(seed, frame_index)`.
pub fn sample_frame(sources: &SubsourceSet, seed: u64, frame_index: u64) -> FrameSample {
    let mut rng = rng::stream(seed, &[rng::tag::AMPLITUDES, frame_index]);
    let normal = Normal::new(0.0, (sources.power / 2.0).sqrt()).expect("positive power");
    let amplitudes = (0..sources.len())
        .map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect();
    FrameSample {
        amplitudes,
        frame_index,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_count_for_eleven_pitch_disc() {
        // Brute-force count of integer (i, j) with i² + j² ≤ 5.5²: 97.
        let oracle = (-6i32..=6)
            .flat_map(|j| (-6i32..=6).map(move |i| (i, j)))
            .filter(|&(i, j)| ((i * i + j * j) as f64) <= 30.25)
            .count();
        assert_eq!(oracle, 97);
        let set = make_source_grid(11e-3, 1e-3).unwrap();
        assert_eq!(set.len(), 97);
        assert_eq!(make_source_grid(11e-3, 11e-3 / 16.0).unwrap().len(), 197);
    }

    #[test]
    fn diameter_bounds_every_pair() {
        let set = make_source_grid(11e-3, 1e-3).unwrap();
        assert!(set.diameter() <= 11e-3 + 1e-12);
        for a in set.positions() {
            for b in set.positions() {
                assert!((*a - *b).norm() <= set.diameter() + 1e-12);
            }
        }
        // Realized extent: farthest lattice points are (±5, ±2) etc.
        assert!((set.diameter() - (10f64 * 10.0 + 4.0 * 4.0).sqrt() * 1e-3).abs() < 1e-12);
    }

    #[test]
    fn degenerate_lattices_are_rejected() {
        assert!(matches!(make_source_grid(11e-3, 11e-3), Err(Error::Configuration { .. })));
        assert!(make_source_grid(11e-3, 12e-3).is_err());
        assert!(make_source_grid(-1.0, 1e-3).is_err());
        assert!(SubsourceSet::from_positions(vec![Point2::ORIGIN], 1.0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_frame() {
        let set = make_source_grid(4e-3, 1e-3).unwrap();
        let a = sample_frame(&set, 9, 4);
        assert_eq!(a, sample_frame(&set, 9, 4));
        assert_ne!(a.amplitudes, sample_frame(&set, 9, 5).amplitudes);
        assert_ne!(a.amplitudes, sample_frame(&set, 10, 4).amplitudes);
        assert_eq!(a.amplitudes.len(), set.len());
    }
}
