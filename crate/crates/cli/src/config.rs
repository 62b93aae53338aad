//! Run configuration: flat `key = value` lines with `#` comments and an
//! optional `[profile]` section holding a C_n² profile (inline lines in the
//! profile-file format, or `file = <path>`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ghost_turb_core::CnSquaredProfile;

/// Every recognized key with its default, in the order they are written
/// back out. `None` means "derived from other keys when absent".
const KEYS: &[(&str, Option<&str>)] = &[
    ("wavelength_nm", Some("780")),
    ("path_length_m", Some("1.4")),
    ("cn2", Some("1.5e-12")),
    ("rho0_mm", None),
    ("source_diameter_mm", Some("11")),
    ("source_pitch_mm", None),
    ("source_radius_mm", None),
    ("source_power", Some("1")),
    ("screen_position_fraction", Some("0")),
    ("paths_independent", Some("true")),
    ("grid_n", Some("64")),
    ("grid_pitch_um", Some("12")),
    ("object_grid_n", None),
    ("object_grid_pitch_um", None),
    ("mask", Some("point")),
    ("mask_file", None),
    ("slit_width_um", Some("60")),
    ("slit_separation_um", Some("200")),
    ("slit_height_um", Some("400")),
    ("bar_width_um", Some("60")),
    ("frames", Some("10000")),
    ("seed", Some("1")),
    ("out", Some("out")),
    ("tolerance", Some("0.10")),
    ("vacuum_tolerance", Some("0.05")),
    ("compare_rho0_mm", Some("inf, 50, 10, 5, 2")),
];

pub const WAVELENGTH_NOTE: &str = "assumed; the source experiment does not report its laser wavelength";

#[derive(Debug, Clone, PartialEq)]
pub enum MaskSpec {
    Point,
    DoubleSlit { width: f64, separation: f64, height: f64 },
    ThreeBar { bar_width: f64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub wavelength: f64,
    pub path_length: f64,
    pub profile: CnSquaredProfile,
    /// Replaces the profile-derived coherence length when set.
    pub rho0_override: Option<f64>,
    pub source_diameter: f64,
    pub source_pitch: f64,
    pub source_radius: f64,
    pub source_power: f64,
    pub screen_position_fraction: f64,
    pub paths_independent: bool,
    pub grid_n: usize,
    pub grid_pitch: f64,
    pub object_grid_n: usize,
    pub object_grid_pitch: f64,
    pub mask: MaskSpec,
    pub frames: u64,
    pub seed: u64,
    pub out: PathBuf,
    pub tolerance: f64,
    pub vacuum_tolerance: f64,
    /// Coherence lengths swept by `compare`, meters (∞ for vacuum).
    pub compare_rho0: Vec<f64>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub frames: Option<u64>,
    pub rho0_mm: Option<f64>,
}

enum ProfileSource {
    Default,
    Inline(String),
    File(PathBuf),
}

struct Parsed {
    values: BTreeMap<String, String>,
    profile: ProfileSource,
}

fn parse_text(text: &str, base: &Path) -> Result<Parsed> {
    let mut values = BTreeMap::new();
    let mut profile_lines = String::new();
    let mut profile_file = None;
    let mut in_profile = false;
    let mut saw_profile = false;
    for (n, raw) in text.lines().enumerate() {
        let lineno = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if line != "[profile]" {
                bail!("line {lineno}: unknown section {line}; only [profile] is recognized");
            }
            if saw_profile {
                bail!("line {lineno}: duplicate [profile] section");
            }
            in_profile = true;
            saw_profile = true;
            continue;
        }
        if in_profile {
            if let Some((k, v)) = line.split_once('=') {
                if k.trim() != "file" {
                    bail!("line {lineno}: the [profile] section accepts only `file = <path>` or profile lines");
                }
                profile_file = Some(base.join(v.trim()));
            } else {
                profile_lines.push_str(line);
                profile_lines.push('\n');
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {lineno}: expected `key = value`, got `{line}`"))?;
        let key = key.trim();
        if !KEYS.iter().any(|(k, _)| *k == key) {
            bail!("line {lineno}: unknown key `{key}`");
        }
        if values.insert(key.to_string(), value.trim().to_string()).is_some() {
            bail!("line {lineno}: key `{key}` given twice");
        }
    }
    let profile = match (profile_file, profile_lines.is_empty()) {
        (Some(_), false) => bail!("[profile] has both `file =` and inline lines"),
        (Some(path), true) => ProfileSource::File(path),
        (None, false) => ProfileSource::Inline(profile_lines),
        (None, true) if saw_profile => bail!("[profile] section is empty"),
        (None, true) => ProfileSource::Default,
    };
    Ok(Parsed { values, profile })
}

fn number(values: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    values
        .get(key)
        .map(|v| v.parse::<f64>().with_context(|| format!("`{key}`: `{v}` is not a number")))
        .transpose()
}

fn positive(values: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    match number(values, key)? {
        Some(v) if !(v.is_finite() && v > 0.0) => bail!("`{key}` must be positive and finite, got {v}"),
        other => Ok(other),
    }
}

fn required(values: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    Ok(positive(values, key)?.expect("key has a default"))
}

fn integer<T: std::str::FromStr>(values: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    values
        .get(key)
        .map(|v| v.parse::<T>().map_err(|_| anyhow!("`{key}`: `{v}` is not a non-negative integer")))
        .transpose()
}

fn rho0_mm_value(v: f64, what: &str) -> Result<f64> {
    if v.is_nan() || v <= 0.0 {
        bail!("{what} must be positive or inf, got {v}");
    }
    Ok(v * 1e-3)
}

/// Shortest decimal `d` for which the parser's `d * unit` gives back `si`
/// exactly.
fn in_units(si: f64, unit: f64) -> String {
    let scaled = si / unit;
    let below = f64::from_bits(scaled.to_bits().wrapping_sub(1));
    let above = f64::from_bits(scaled.to_bits() + 1);
    for digits in 0..17 {
        for candidate in [scaled, below, above] {
            let text = format!("{candidate:.digits$e}");
            if text.parse::<f64>().is_ok_and(|d| d * unit == si) {
                return format!("{}", text.parse::<f64>().unwrap());
            }
        }
    }
    format!("{scaled}")
}

impl RunConfig {
    #[cfg(test)]
    pub fn defaults() -> Self {
        Self::from_text("", Path::new("."), &Overrides::default()).expect("defaults are valid")
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base, overrides).with_context(|| format!("in config {}", path.display()))
    }

    /// Parses `text`; relative file paths resolve against `base`.
    pub fn from_text(text: &str, base: &Path, overrides: &Overrides) -> Result<Self> {
        let parsed = parse_text(text, base)?;
        let mut values = parsed.values;
        for (key, default) in KEYS {
            if let Some(d) = default {
                values.entry(key.to_string()).or_insert_with(|| d.to_string());
            }
        }

        let wavelength = required(&values, "wavelength_nm")? * 1e-9;
        let path_length = required(&values, "path_length_m")?;
        let profile = match parsed.profile {
            ProfileSource::Default => {
                let cn2 = number(&values, "cn2")?.expect("default");
                CnSquaredProfile::uniform(path_length, cn2)?
            }
            ProfileSource::Inline(text) => CnSquaredProfile::parse(&text).context("inline [profile]")?,
            ProfileSource::File(path) => CnSquaredProfile::load(&path)?,
        };
        if (profile.path_length() - path_length).abs() > 1e-9 * path_length {
            bail!(
                "profile spans {} m but path_length_m is {} m",
                profile.path_length(),
                path_length
            );
        }

        let rho0_override = match overrides.rho0_mm {
            Some(v) => Some(rho0_mm_value(v, "--rho0-mm")?),
            None => number(&values, "rho0_mm")?.map(|v| rho0_mm_value(v, "`rho0_mm`")).transpose()?,
        };

        let source_diameter = required(&values, "source_diameter_mm")? * 1e-3;
        let source_pitch = positive(&values, "source_pitch_mm")?.map_or(source_diameter / 16.0, |v| v * 1e-3);
        let source_radius = positive(&values, "source_radius_mm")?.map_or(source_pitch / 2.0, |v| v * 1e-3);
        let source_power = required(&values, "source_power")?;

        let screen_position_fraction = number(&values, "screen_position_fraction")?.expect("default");
        if !(0.0..=1.0).contains(&screen_position_fraction) {
            bail!("`screen_position_fraction` must lie in [0, 1], got {screen_position_fraction}");
        }
        let paths_independent = match values["paths_independent"].as_str() {
            "true" => true,
            "false" => false,
            other => bail!("`paths_independent` must be true or false, got `{other}`"),
        };

        let grid_n: usize = integer(&values, "grid_n")?.expect("default");
        let grid_pitch = required(&values, "grid_pitch_um")? * 1e-6;
        let object_grid_n: usize = integer(&values, "object_grid_n")?.unwrap_or(grid_n);
        let object_grid_pitch = positive(&values, "object_grid_pitch_um")?.map_or(grid_pitch, |v| v * 1e-6);
        if grid_n < 3 || object_grid_n < 3 {
            bail!("grids need at least 3 pixels per side");
        }

        let um = |key: &str| -> Result<f64> { Ok(required(&values, key)? * 1e-6) };
        let mask = match values["mask"].as_str() {
            "point" => MaskSpec::Point,
            "double_slit" => MaskSpec::DoubleSlit {
                width: um("slit_width_um")?,
                separation: um("slit_separation_um")?,
                height: um("slit_height_um")?,
            },
            "three_bar" => MaskSpec::ThreeBar {
                bar_width: um("bar_width_um")?,
            },
            "file" => {
                let file = values
                    .get("mask_file")
                    .ok_or_else(|| anyhow!("`mask = file` needs `mask_file`"))?;
                let path = base.join(file);
                if !path.is_file() {
                    bail!("mask file {} does not exist", path.display());
                }
                MaskSpec::File(path)
            }
            other => bail!("`mask` must be point, double_slit, three_bar or file, got `{other}`"),
        };

        let frames = match overrides.frames {
            Some(f) => f,
            None => integer(&values, "frames")?.expect("default"),
        };
        let seed = match overrides.seed {
            Some(s) => s,
            None => integer(&values, "seed")?.expect("default"),
        };
        let out = overrides.out.clone().unwrap_or_else(|| base.join(&values["out"]));

        let tolerance = required(&values, "tolerance")?;
        let vacuum_tolerance = required(&values, "vacuum_tolerance")?;
        let compare_rho0 = values["compare_rho0_mm"]
            .split(',')
            .map(|t| {
                let t = t.trim();
                let v: f64 = t.parse().map_err(|_| anyhow!("`compare_rho0_mm`: `{t}` is not a number"))?;
                rho0_mm_value(v, "`compare_rho0_mm` entries")
            })
            .collect::<Result<Vec<_>>>()?;
        if compare_rho0.is_empty() {
            bail!("`compare_rho0_mm` is empty");
        }

        Ok(RunConfig {
            wavelength,
            path_length,
            profile,
            rho0_override,
            source_diameter,
            source_pitch,
            source_radius,
            source_power,
            screen_position_fraction,
            paths_independent,
            grid_n,
            grid_pitch,
            object_grid_n,
            object_grid_pitch,
            mask,
            frames,
            seed,
            out,
            tolerance,
            vacuum_tolerance,
            compare_rho0,
        })
    }

    /// The configuration in its own file format with every key explicit
    /// and the profile inline, so it reproduces the run on its own.
    pub fn to_text(&self) -> String {
        let mm = |v: f64| if v.is_finite() { in_units(v, 1e-3) } else { "inf".to_string() };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("wavelength_nm", in_units(self.wavelength, 1e-9));
        kv("path_length_m", format!("{}", self.path_length));
        if let Some(r) = self.rho0_override {
            kv("rho0_mm", mm(r));
        }
        kv("source_diameter_mm", mm(self.source_diameter));
        kv("source_pitch_mm", mm(self.source_pitch));
        kv("source_radius_mm", mm(self.source_radius));
        kv("source_power", format!("{}", self.source_power));
        kv("screen_position_fraction", format!("{}", self.screen_position_fraction));
        kv("paths_independent", format!("{}", self.paths_independent));
        kv("grid_n", format!("{}", self.grid_n));
        kv("grid_pitch_um", in_units(self.grid_pitch, 1e-6));
        kv("object_grid_n", format!("{}", self.object_grid_n));
        kv("object_grid_pitch_um", in_units(self.object_grid_pitch, 1e-6));
        match &self.mask {
            MaskSpec::Point => kv("mask", "point".into()),
            MaskSpec::DoubleSlit {
                width,
                separation,
                height,
            } => {
                kv("mask", "double_slit".into());
                kv("slit_width_um", in_units(*width, 1e-6));
                kv("slit_separation_um", in_units(*separation, 1e-6));
                kv("slit_height_um", in_units(*height, 1e-6));
            }
            MaskSpec::ThreeBar { bar_width } => {
                kv("mask", "three_bar".into());
                kv("bar_width_um", in_units(*bar_width, 1e-6));
            }
            MaskSpec::File(path) => {
                kv("mask", "file".into());
                kv("mask_file", path.display().to_string());
            }
        }
        kv("frames", format!("{}", self.frames));
        kv("seed", format!("{}", self.seed));
        kv("out", self.out.display().to_string());
        kv("tolerance", format!("{}", self.tolerance));
        kv("vacuum_tolerance", format!("{}", self.vacuum_tolerance));
        kv(
            "compare_rho0_mm",
            self.compare_rho0.iter().map(|&r| mm(r)).collect::<Vec<_>>().join(", "),
        );
        s.push_str("\n[profile]\n");
        for seg in self.profile.segments() {
            let _ = writeln!(s, "{} {} {:e}", seg.z_start, seg.z_end, seg.cn2);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::defaults();
        assert_eq!(c.wavelength, 780e-9);
        assert_eq!(c.path_length, 1.4);
        assert_eq!(c.source_diameter, 11e-3);
        assert_eq!(c.source_pitch, 11e-3 / 16.0);
        assert_eq!(c.source_radius, 11e-3 / 32.0);
        assert_eq!(c.grid_n, 64);
        assert!((c.grid_pitch - 12e-6).abs() < 1e-18);
        assert_eq!(c.frames, 10_000);
        assert_eq!(c.screen_position_fraction, 0.0);
        assert!(c.paths_independent);
        assert_eq!(c.profile.segments().len(), 1);
        assert_eq!(c.profile.segments()[0].cn2, 1.5e-12);
        assert_eq!(c.compare_rho0.len(), 5);
        assert!(c.compare_rho0[0].is_infinite());
        assert_eq!(c.mask, MaskSpec::Point);
    }

    #[test]
    fn overrides_win() {
        let o = Overrides {
            seed: Some(9),
            out: Some(PathBuf::from("/tmp/x")),
            frames: Some(12),
            rho0_mm: Some(2.0),
        };
        let c = RunConfig::from_text("seed = 3\nframes = 100\nrho0_mm = 50\n", Path::new("."), &o).unwrap();
        assert_eq!((c.seed, c.frames), (9, 12));
        assert_eq!(c.rho0_override, Some(2e-3));
        assert_eq!(c.out, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn profile_section_and_comments() {
        let text = "# test\npath_length_m = 2 # meters\n[profile]\n0 1 1e-13\n1 2 0\n";
        let c = RunConfig::from_text(text, Path::new("."), &Overrides::default()).unwrap();
        assert_eq!(c.profile.segments().len(), 2);
        let uniform = "[profile]\nuniform 1.4 0\n";
        let c = RunConfig::from_text(uniform, Path::new("."), &Overrides::default()).unwrap();
        assert_eq!(c.profile.segments()[0].cn2, 0.0);
    }

    #[test]
    fn errors_are_specific() {
        let bad = |t: &str| {
            RunConfig::from_text(t, Path::new("."), &Overrides::default())
                .unwrap_err()
                .to_string()
        };
        assert!(bad("colour = red").contains("unknown key"));
        assert!(bad("seed = 1\nseed = 2").contains("twice"));
        assert!(bad("wavelength_nm = -5").contains("positive"));
        assert!(bad("[extra]").contains("unknown section"));
        assert!(bad("screen_position_fraction = 2").contains("[0, 1]"));
        assert!(bad("[profile]\nuniform 3 1e-12").contains("path_length_m"));
        assert!(bad("mask = file\nmask_file = nowhere.pgm").contains("does not exist"));
        assert!(bad("just words").contains("key = value"));
    }

    #[test]
    fn text_round_trip() {
        let text = "mask = double_slit\nrho0_mm = inf\nseed = 4\n[profile]\n0 0.7 2e-12\n0.7 1.4 1e-12\n";
        let c = RunConfig::from_text(text, Path::new("/base"), &Overrides::default()).unwrap();
        let again = RunConfig::from_text(&c.to_text(), Path::new("/elsewhere"), &Overrides::default()).unwrap();
        assert_eq!(c, again);
    }
}
