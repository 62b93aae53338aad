//! C_n² profiles and the source-plane coherence length they produce.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

/// Constant-strength stretch of the path, `[z_start, z_end)` in meters,
/// with C_n² in m^(-2/3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub z_start: f64,
    pub z_end: f64,
    pub cn2: f64,
}

/// Piecewise-constant refractive-index structure constant along `[0, L]`,
/// with z = 0 at the source and z = L at the object / detector planes.
#[derive(Debug, Clone, PartialEq)]
pub struct CnSquaredProfile {
    segments: Vec<Segment>,
    path_length: f64,
}

const CONTIGUITY_TOL: f64 = 1e-9;

impl CnSquaredProfile {
    /// Constant C_n² over the whole path. This is the minimum-ρ₀ placement
    /// for a given peak strength, and the default used by the CLI.
    pub fn uniform(path_length: f64, cn2: f64) -> Result<Self> {
        Self::piecewise(vec![Segment {
            z_start: 0.0,
            z_end: path_length,
            cn2,
        }])
    }

    pub fn piecewise(segments: Vec<Segment>) -> Result<Self> {
        let Some(last) = segments.last() else {
            return Err(Error::InvalidProfile {
                index: 0,
                reason: "profile has no segments".into(),
            });
        };
        let path_length = last.z_end;
        if !(path_length.is_finite() && path_length > 0.0) {
            return Err(Error::InvalidProfile {
                index: segments.len() - 1,
                reason: format!("path length must be positive, got {path_length}"),
            });
        }
        let tol = CONTIGUITY_TOL * path_length;
        let mut expected_start = 0.0;
        for (index, s) in segments.iter().enumerate() {
            if !(s.z_start.is_finite() && s.z_end.is_finite()) {
                return Err(Error::InvalidProfile {
                    index,
                    reason: "non-finite bounds".into(),
                });
            }
            if (s.z_start - expected_start).abs() > tol {
                let what = if s.z_start > expected_start { "gap" } else { "overlap" };
                return Err(Error::InvalidProfile {
                    index,
                    reason: format!(
                        "{what}: starts at {} m, previous segment ends at {expected_start} m",
                        s.z_start
                    ),
                });
            }
            if s.z_end <= s.z_start {
                return Err(Error::InvalidProfile {
                    index,
                    reason: format!("empty or reversed interval [{}, {}]", s.z_start, s.z_end),
                });
            }
            if !(s.cn2.is_finite() && s.cn2 >= 0.0) {
                return Err(Error::InvalidProfile {
                    index,
                    reason: format!("C_n² must be finite and non-negative, got {}", s.cn2),
                });
            }
            expected_start = s.z_end;
        }
        Ok(CnSquaredProfile {
            segments,
            path_length,
        })
    }

    /// `n` equal segments whose strengths are `f` evaluated at each
    /// segment midpoint.
    pub fn sampled(path_length: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidProfile {
                index: 0,
                reason: "profile has no segments".into(),
            });
        }
        let dz = path_length / n as f64;
        let segments = (0..n)
            .map(|i| {
                let z_start = i as f64 * dz;
                let z_end = if i + 1 == n { path_length } else { (i + 1) as f64 * dz };
                Segment {
                    z_start,
                    z_end,
                    cn2: f(0.5 * (z_start + z_end)),
                }
            })
            .collect();
        Self::piecewise(segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn path_length(&self) -> f64 {
        self.path_length
    }

    /// Strength at `z`, or `None` outside `[0, L]`.
    pub fn cn2_at(&self, z: f64) -> Option<f64> {
        if !(0.0..=self.path_length).contains(&z) {
            return None;
        }
        self.segments
            .iter()
            .find(|s| z < s.z_end)
            .or(self.segments.last())
            .map(|s| s.cn2)
    }

    /// Same profile with every strength multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::piecewise(
            self.segments
                .iter()
                .map(|s| Segment {
                    cn2: s.cn2 * factor,
                    ..*s
                })
                .collect(),
        )
    }

    /// Parses the plain-text profile format: one `z_start z_end cn2` line
    /// per segment, or a single `uniform L cn2` line. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut segments = Vec::new();
        let mut uniform = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |reason: String| Error::InvalidProfile {
                index: segments.len(),
                reason: format!("line {}: {reason}", lineno + 1),
            };
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("`{s}` is not a number")))
            };
            if fields[0].eq_ignore_ascii_case("uniform") {
                if uniform.is_some() || !segments.is_empty() {
                    return Err(bad("`uniform` must be the only segment line".into()));
                }
                uniform = Some((num(fields[1])?, num(fields[2])?));
            } else {
                if uniform.is_some() {
                    return Err(bad("`uniform` must be the only segment line".into()));
                }
                segments.push(Segment {
                    z_start: num(fields[0])?,
                    z_end: num(fields[1])?,
                    cn2: num(fields[2])?,
                });
            }
        }
        match uniform {
            Some((length, cn2)) => Self::uniform(length, cn2),
            None => Self::piecewise(segments),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }
}

/// ∫₀ᴸ C_n²(z) (1 − z/L)^{5/3} dz in m^(1/3), exact for piecewise-constant
/// profiles via the antiderivative −(3L/8)(1 − z/L)^{8/3}.
pub fn weighted_path_integral(profile: &CnSquaredProfile) -> f64 {
    let length = profile.path_length;
    let tail = |z: f64| (1.0 - z / length).max(0.0).powf(8.0 / 3.0);
    profile
        .segments
        .iter()
        .map(|s| s.cn2 * (3.0 * length / 8.0) * (tail(s.z_start) - tail(s.z_end)))
        .sum()
}

/// Source-plane turbulence coherence length
/// ρ₀ = (2.91 k² ∫ C_n²(z)(1 − z/L)^{5/3} dz)^{−3/5}, k = 2π/λ.
///
/// A path with no turbulence returns `f64::INFINITY`.
pub fn coherence_length(profile: &CnSquaredProfile, wavelength: f64) -> Result<f64> {
    if !(wavelength.is_finite() && wavelength > 0.0) {
        return Err(Error::param(
            "turbulence",
            "wavelength",
            format!("must be positive, got {wavelength}"),
        ));
    }
    let integral = weighted_path_integral(profile);
    if integral == 0.0 {
        return Ok(f64::INFINITY);
    }
    let k = 2.0 * PI / wavelength;
    Ok((2.91 * k * k * integral).powf(-3.0 / 5.0))
}
