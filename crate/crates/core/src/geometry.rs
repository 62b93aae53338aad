//! Transverse coordinates, sampling grids and real-valued image maps.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// A transverse position or displacement in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sqr(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Square-pixel sampling grid centered on `center`.
///
/// Pixel `(ix, iy)` sits at `center + ((ix - (nx-1)/2) * pitch, (iy - (ny-1)/2) * pitch)`,
/// so an odd pixel count puts a sample exactly on the center. Storage
/// order everywhere in the crate is row-major, `iy * nx + ix`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    pitch: f64,
    center: Point2,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, pitch: f64, center: Point2) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::param("optics", "grid", "pixel counts must be at least 1"));
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(Error::param("optics", "pitch", format!("must be positive, got {pitch}")));
        }
        if !(center.x.is_finite() && center.y.is_finite()) {
            return Err(Error::param("optics", "center", "must be finite"));
        }
        Ok(Grid2D { nx, ny, pitch, center })
    }

    pub fn square(n: usize, pitch: f64) -> Result<Self> {
        Self::new(n, n, pitch, Point2::ORIGIN)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn center(&self) -> Point2 {
        self.center
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn coords_of(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    pub fn point(&self, ix: usize, iy: usize) -> Point2 {
        let half_x = (self.nx as f64 - 1.0) / 2.0;
        let half_y = (self.ny as f64 - 1.0) / 2.0;
        Point2::new(
            self.center.x + (ix as f64 - half_x) * self.pitch,
            self.center.y + (iy as f64 - half_y) * self.pitch,
        )
    }

    /// Inverse of [`Grid2D::point`]: fractional pixel coordinates of `p`.
    pub fn fractional_index(&self, p: Point2) -> (f64, f64) {
        let half_x = (self.nx as f64 - 1.0) / 2.0;
        let half_y = (self.ny as f64 - 1.0) / 2.0;
        (
            (p.x - self.center.x) / self.pitch + half_x,
            (p.y - self.center.y) / self.pitch + half_y,
        )
    }

    pub fn points(&self) -> impl Iterator<Item = Point2> + '_ {
        (0..self.ny).flat_map(move |iy| (0..self.nx).map(move |ix| self.point(ix, iy)))
    }

    /// Physical extent (first to last sample) along x and y.
    pub fn extent(&self) -> (f64, f64) {
        (
            (self.nx as f64 - 1.0) * self.pitch,
            (self.ny as f64 - 1.0) * self.pitch,
        )
    }

    /// Whether `p` lies inside the sampled rectangle (inclusive, with a
    /// relative slack of 1e-9 pixel).
    pub fn contains(&self, p: Point2) -> bool {
        let (fx, fy) = self.fractional_index(p);
        let eps = 1e-9;
        fx >= -eps && fy >= -eps && fx <= self.nx as f64 - 1.0 + eps && fy <= self.ny as f64 - 1.0 + eps
    }

    pub fn same_sampling(&self, other: &Grid2D) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && (self.pitch - other.pitch).abs() <= 1e-12 * self.pitch
            && (self.center - other.center).norm() <= 1e-9 * self.pitch
    }
}

/// Real-valued map sampled on a [`Grid2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMap {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ImageMap {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch {
                module: "correlator",
                reason: format!("{} values for a {}x{} grid", values.len(), grid.nx(), grid.ny()),
            });
        }
        Ok(ImageMap { grid, values })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        ImageMap {
            values: vec![0.0; grid.len()],
            grid,
        }
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let values = (0..grid.ny())
            .flat_map(|iy| (0..grid.nx()).map(move |ix| (ix, iy)))
            .map(|(ix, iy)| f(ix, iy))
            .collect();
        ImageMap { grid, values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.grid.index(ix, iy)]
    }

    /// Index of the largest value; ties resolve to the first in storage order.
    pub fn argmax(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageMap {
        ImageMap {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}
