//! File formats: 16-bit big-endian binary PGM with a scale sidecar,
//! 8-bit PGM masks, and `x,y,value` CSV maps.
//!
//! PGM rows run from the largest y (top) to the smallest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::ImageMap;

/// Linear map between 16-bit levels and physical values:
/// `value = min + level / 65535 · (max − min)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgmScale {
    pub min: f64,
    pub max: f64,
}

impl PgmScale {
    pub fn value(&self, level: u16) -> f64 {
        self.min + f64::from(level) / 65535.0 * (self.max - self.min)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn sidecar_path(pgm: &Path) -> PathBuf {
    let mut name = pgm.as_os_str().to_owned();
    name.push(".scale.txt");
    PathBuf::from(name)
}

/// PGM payload and scale for `map`, auto-scaled to the full 16-bit range.
pub fn encode_pgm16(map: &ImageMap) -> (Vec<u8>, PgmScale) {
    let (min, max) = map.min_max();
    let span = max - min;
    let g = map.grid();
    let mut out = format!("P5\n{} {}\n65535\n", g.nx(), g.ny()).into_bytes();
    out.reserve(2 * g.len());
    for iy in (0..g.ny()).rev() {
        for ix in 0..g.nx() {
            let level = if span > 0.0 {
                ((map.get(ix, iy) - min) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
            } else {
                0
            };
            out.extend_from_slice(&level.to_be_bytes());
        }
    }
    (out, PgmScale { min, max })
}

/// Writes `path` and `path.scale.txt`.
pub fn write_pgm16(path: &Path, map: &ImageMap) -> Result<PgmScale> {
    let (bytes, scale) = encode_pgm16(map);
    fs::write(path, bytes).map_err(io_err(path))?;
    let side = sidecar_path(path);
    let mut f = fs::File::create(&side).map_err(io_err(&side))?;
    writeln!(
        f,
        "# value = min + level / 65535 * (max - min)\nmin = {:e}\nmax = {:e}\npitch_m = {:e}",
        scale.min,
        scale.max,
        map.grid().pitch()
    )
    .map_err(io_err(&side))?;
    Ok(scale)
}

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("not a binary (P5) PGM"));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("expected a decimal header field"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing whitespace after maxval"));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(bad("invalid dimensions or maxval"));
    }
    Ok(Header {
        width: width as usize,
        height: height as usize,
        maxval,
        data_start: pos + 1,
    })
}

/// Reads an 8-bit binary PGM as `(nx, ny, values in [0, 1])`, stored
/// bottom row first to match [`crate::Grid2D`] indexing.
pub fn read_pgm8(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let h = parse_header(&bytes, path)?;
    if h.maxval > 255 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("maxval {} is not an 8-bit PGM", h.maxval),
        });
    }
    let data = &bytes[h.data_start..];
    if data.len() < h.width * h.height {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("{} data bytes for {}x{} pixels", data.len(), h.width, h.height),
        });
    }
    let mut values = vec![0.0; h.width * h.height];
    for row in 0..h.height {
        let iy = h.height - 1 - row;
        for ix in 0..h.width {
            values[iy * h.width + ix] = f64::from(data[row * h.width + ix]) / f64::from(h.maxval);
        }
    }
    Ok((h.width, h.height, values))
}

/// Reads a 16-bit PGM written by [`write_pgm16`] back into raw levels.
pub fn read_pgm16_levels(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let h = parse_header(&bytes, path)?;
    let data = &bytes[h.data_start..];
    if h.maxval < 256 || data.len() < 2 * h.width * h.height {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "not a complete 16-bit PGM".into(),
        });
    }
    let levels = data
        .chunks_exact(2)
        .take(h.width * h.height)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((h.width, h.height, levels))
}

/// RFC 4180 CSV with header `x,y,value`, coordinates in meters.
pub fn write_csv(path: &Path, map: &ImageMap) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "value"])?;
    let g = map.grid();
    for iy in 0..g.ny() {
        for ix in 0..g.nx() {
            let p = g.point(ix, iy);
            w.write_record([p.x.to_string(), p.y.to_string(), map.get(ix, iy).to_string()])?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Grid2D;

    #[test]
    fn pgm16_header_and_scaling() {
        let g = Grid2D::new(3, 2, 1e-5, Default::default()).unwrap();
        let map = ImageMap::new(g, vec![-1.0, 0.0, 1.0, 0.5, 0.25, 1.0]).unwrap();
        let (bytes, scale) = encode_pgm16(&map);
        assert_eq!(&bytes[..15], b"P5\n3 2\n65535\n\xbf\xff");
        assert_eq!(scale, PgmScale { min: -1.0, max: 1.0 });
        // First stored row is the top (iy = 1): 0.5 → level 49151.
        assert_eq!(u16::from_be_bytes([bytes[13], bytes[14]]), 49151);
        assert_eq!(bytes.len(), 13 + 12);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        write_pgm16(&path, &map).unwrap();
        let (nx, ny, levels) = read_pgm16_levels(&path).unwrap();
        assert_eq!((nx, ny), (3, 2));
        assert!((scale.value(levels[3]) - (-1.0)).abs() < 1e-4);
        let side = fs::read_to_string(sidecar_path(&path)).unwrap();
        assert!(side.contains("min = -1e0") && side.contains("max = 1e0"), "{side}");
    }

    #[test]
    fn flat_map_encodes_zero() {
        let g = Grid2D::square(2, 1.0).unwrap();
        let (bytes, _) = encode_pgm16(&ImageMap::from_fn(g, |_, _| 3.0));
        assert!(bytes[bytes.len() - 8..].iter().all(|&b| b == 0));
    }

    #[test]
    fn reads_eight_bit_pgm_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.pgm");
        let mut data = b"P5\n# a mask\n2 2\n255\n".to_vec();
        data.extend_from_slice(&[0, 255, 51, 102]);
        fs::write(&path, &data).unwrap();
        let (nx, ny, v) = read_pgm8(&path).unwrap();
        assert_eq!((nx, ny), (2, 2));
        // Bottom row (iy = 0) is the last row in the file.
        assert_eq!(v, vec![0.2, 0.4, 0.0, 1.0]);

        fs::write(&path, b"P2\n2 2\n255\n0 0 0 0").unwrap();
        assert!(matches!(read_pgm8(&path), Err(Error::Format { .. })));
        fs::write(&path, b"P5\n2 2\n255\n\x00").unwrap();
        assert!(matches!(read_pgm8(&path), Err(Error::Format { .. })));
        assert!(matches!(read_pgm8(&dir.path().join("missing.pgm")), Err(Error::Io { .. })));
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let g = Grid2D::new(2, 1, 0.5, Default::default()).unwrap();
        write_csv(&path, &ImageMap::new(g, vec![1.5, -2.0]).unwrap()).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "x,y,value\n-0.25,0,1.5\n0.25,0,-2\n");
    }
}
