use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Grid2D, ImageMap};
use crate::io;
use crate::optics::ComplexField;

#[derive(Debug, Clone, PartialEq)]
pub enum MaskDescriptor {
    /// Single transmitting pixel.
    Point { ix: usize, iy: usize },
    /// Two vertical slits centered at x = ±separation/2.
    DoubleSlit { width: f64, separation: f64, height: f64 },
    /// Three vertical bars of equal width and spacing, five widths tall.
    ThreeBar { bar_width: f64 },
    File(PathBuf),
}

/// Deterministic transmissive object, T(ρ) ∈ [0, 1] per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMask {
    map: ImageMap,
    descriptor: MaskDescriptor,
}

impl ObjectMask {
    pub fn new(map: ImageMap, descriptor: MaskDescriptor) -> Result<Self> {
        if let Some(bad) = map.values().iter().position(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::param(
                "correlator",
                "transmissivity",
                format!("pixel {bad} has value {} outside [0, 1]", map.values()[bad]),
            ));
        }
        Ok(ObjectMask { map, descriptor })
    }

    /// Point object at pixel `(nx/2, ny/2)`.
    pub fn point(grid: Grid2D) -> Self {
        Self::point_at(grid, grid.nx() / 2, grid.ny() / 2).expect("center pixel is in range")
    }

    pub fn point_at(grid: Grid2D, ix: usize, iy: usize) -> Result<Self> {
        if ix >= grid.nx() || iy >= grid.ny() {
            return Err(Error::param("correlator", "point", format!("pixel ({ix}, {iy}) is outside the grid")));
        }
        let map = ImageMap::from_fn(grid, |x, y| if (x, y) == (ix, iy) { 1.0 } else { 0.0 });
        Self::new(map, MaskDescriptor::Point { ix, iy })
    }

    pub fn double_slit(grid: Grid2D, width: f64, separation: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && separation >= width && height > 0.0) {
            return Err(Error::param(
                "correlator",
                "double_slit",
                format!("need width > 0, separation >= width, height > 0 (got {width}, {separation}, {height})"),
            ));
        }
        let c = grid.center();
        let map = ImageMap::from_fn(grid, |ix, iy| {
            let p = grid.point(ix, iy) - c;
            let in_x = ((p.x.abs() - separation / 2.0).abs()) <= width / 2.0;
            let in_y = p.y.abs() <= height / 2.0;
            if in_x && in_y { 1.0 } else { 0.0 }
        });
        Self::new(map, MaskDescriptor::DoubleSlit { width, separation, height })
    }

    pub fn three_bar(grid: Grid2D, bar_width: f64) -> Result<Self> {
        if !(bar_width > 0.0) {
            return Err(Error::param("correlator", "bar_width", format!("must be positive, got {bar_width}")));
        }
        let c = grid.center();
        let map = ImageMap::from_fn(grid, |ix, iy| {
            let p = grid.point(ix, iy) - c;
            let on_bar = [-2.0, 0.0, 2.0]
                .iter()
                .any(|k| (p.x - k * bar_width).abs() <= bar_width / 2.0);
            if on_bar && p.y.abs() <= 2.5 * bar_width { 1.0 } else { 0.0 }
        });
        Self::new(map, MaskDescriptor::ThreeBar { bar_width })
    }

    /// 8-bit PGM, gray level / 255 as transmissivity, pixel pitch `pitch`,
    /// centered on the optical axis.
    pub fn from_pgm(path: &Path, pitch: f64) -> Result<Self> {
        let (nx, ny, values) = io::read_pgm8(path)?;
        let grid = Grid2D::new(nx, ny, pitch, Default::default())?;
        let map = ImageMap::new(grid, values)?;
        Self::new(map, MaskDescriptor::File(path.to_path_buf()))
    }

    pub fn grid(&self) -> &Grid2D {
        self.map.grid()
    }

    pub fn transmissivity(&self) -> &[f64] {
        self.map.values()
    }

    pub fn map(&self) -> &ImageMap {
        &self.map
    }

    pub fn descriptor(&self) -> &MaskDescriptor {
        &self.descriptor
    }

    /// Pixels with non-zero transmissivity as `(index, T)`.
    pub fn support(&self) -> Vec<(usize, f64)> {
        self.map
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > 0.0)
            .map(|(i, &t)| (i, t))
            .collect()
    }
}

/// Σ |u(ρ)|² T(ρ) · pitch² over the object grid.
pub fn bucket_signal(field: &ComplexField, mask: &ObjectMask) -> Result<f64> {
    if !field.grid().same_sampling(mask.grid()) {
        return Err(Error::GridMismatch {
            module: "correlator",
            reason: "object field and mask are sampled on different grids".into(),
        });
    }
    let pitch = mask.grid().pitch();
    Ok(field
        .values()
        .iter()
        .zip(mask.transmissivity())
        .map(|(u, t)| u.norm_sqr() * t)
        .sum::<f64>()
        * pitch
        * pitch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn field(grid: Grid2D) -> ComplexField {
        let values = (0..grid.len()).map(|i| Complex64::new(i as f64, 1.0 - i as f64 * 0.5)).collect();
        ComplexField::new(grid, values).unwrap()
    }

    #[test]
    fn bucket_trivial_masks() {
        let g = Grid2D::square(4, 2e-6).unwrap();
        let u = field(g);
        let area = 4e-12;
        let opaque = ObjectMask::new(ImageMap::zeros(g), MaskDescriptor::File("none".into())).unwrap();
        assert_eq!(bucket_signal(&u, &opaque).unwrap(), 0.0);
        let open = ObjectMask::new(ImageMap::from_fn(g, |_, _| 1.0), MaskDescriptor::File("open".into())).unwrap();
        let total: f64 = u.values().iter().map(|v| v.norm_sqr()).sum::<f64>() * area;
        assert!((bucket_signal(&u, &open).unwrap() - total).abs() < 1e-12 * total);
        let point = ObjectMask::point(g);
        let expect = u.values()[g.index(2, 2)].norm_sqr() * area;
        assert_eq!(bucket_signal(&u, &point).unwrap(), expect);
        assert_eq!(point.support(), vec![(g.index(2, 2), 1.0)]);
    }

    #[test]
    fn bucket_grid_mismatch() {
        let u = field(Grid2D::square(4, 2e-6).unwrap());
        let m = ObjectMask::point(Grid2D::square(4, 3e-6).unwrap());
        assert!(matches!(bucket_signal(&u, &m), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn rejects_out_of_range_transmissivity() {
        let g = Grid2D::square(2, 1.0).unwrap();
        let map = ImageMap::new(g, vec![0.0, 1.2, 0.0, 0.0]).unwrap();
        assert!(ObjectMask::new(map, MaskDescriptor::File("x".into())).is_err());
    }

    #[test]
    fn built_in_shapes() {
        let g = Grid2D::square(41, 1.0).unwrap();
        let slits = ObjectMask::double_slit(g, 3.0, 10.0, 9.0).unwrap();
        let open: f64 = slits.transmissivity().iter().sum();
        assert_eq!(open, 2.0 * 3.0 * 9.0);
        assert_eq!(slits.map().get(20, 20), 0.0);
        assert_eq!(slits.map().get(25, 20), 1.0);
        assert!(ObjectMask::double_slit(g, 3.0, 2.0, 9.0).is_err());

        let bars = ObjectMask::three_bar(g, 2.0).unwrap();
        let row: Vec<f64> = (0..41).map(|ix| bars.map().get(ix, 20)).collect();
        let on: Vec<usize> = row.iter().enumerate().filter(|(_, &v)| v == 1.0).map(|(i, _)| i).collect();
        assert_eq!(on, vec![15, 16, 17, 19, 20, 21, 23, 24, 25]);
        assert_eq!(bars.map().get(20, 25), 1.0);
        assert_eq!(bars.map().get(20, 26), 0.0);
    }
}
