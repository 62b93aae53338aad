use crate::error::{Error, Result};
use crate::geometry::ImageMap;

/// Width measures of a point-spread function, all in meters.
///
/// `fwhm_*_err` propagate the per-pixel standard error through the
/// half-maximum crossings; they are zero when no error map is supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsfMetrics {
    pub peak: (usize, usize),
    pub peak_value: f64,
    pub fwhm_x: f64,
    pub fwhm_y: f64,
    /// RMS radius about the peak of the background-subtracted image.
    pub second_moment_width: f64,
    pub fwhm_x_err: f64,
    pub fwhm_y_err: f64,
}

impl PsfMetrics {
    pub fn fwhm(&self) -> f64 {
        0.5 * (self.fwhm_x + self.fwhm_y)
    }

    pub fn fwhm_err(&self) -> f64 {
        0.5 * self.fwhm_x_err.hypot(self.fwhm_y_err)
    }
}

/// Extent of one ray from the peak: the length over which the linearly
/// interpolated profile stays above `half`, stopping at the first sample
/// that drops below zero. For a monotone profile this is exactly the
/// interpolated half-maximum crossing; on a noisy profile an isolated dip
/// below half no longer ends the ray early. The error uses the slope at the
/// first crossing. `None` when the ray never drops below `half`.
fn ray_extent(line: &[(f64, f64)], half: f64, peak_err: f64) -> Option<(f64, f64)> {
    let first = line.iter().position(|&(v, _)| v < half)?;
    let (a, sa) = line[first - 1];
    let (b, sb) = line[first];
    let t = (a - half) / (a - b);
    let local_se = if t < 0.5 { sa } else { sb };
    let err = local_se.hypot(peak_err / 2.0) / (a - b);

    let mut extent = 0.0;
    for pair in line.windows(2) {
        let ((a, _), (b, _)) = (pair[0], pair[1]);
        extent += match (a >= half, b >= half) {
            (true, true) => 1.0,
            (true, false) => (a - half) / (a - b),
            (false, true) => (b - half) / (b - a),
            (false, false) => 0.0,
        };
        if b < 0.0 {
            break;
        }
    }
    Some((extent, err))
}

fn border_median(image: &ImageMap) -> f64 {
    let g = image.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let mut border: Vec<f64> = (0..ny)
        .flat_map(|iy| (0..nx).map(move |ix| (ix, iy)))
        .filter(|&(ix, iy)| ix == 0 || iy == 0 || ix + 1 == nx || iy + 1 == ny)
        .map(|(ix, iy)| image.get(ix, iy))
        .collect();
    border.sort_by(|a, b| a.total_cmp(b));
    let n = border.len();
    if n % 2 == 1 {
        border[n / 2]
    } else {
        0.5 * (border[n / 2 - 1] + border[n / 2])
    }
}

/// FWHM along the row and column through the peak, plus an RMS width.
///
/// The peak is the pixel `through` when given (the known image of a point
/// object), otherwise the image maximum. Choosing the maximum of a noisy
/// image favors an upward fluctuation and biases the width low, so runs
/// that know where the point lies should pass it.
///
/// The image is taken as already background-subtracted (as a ghost image
/// is), so half maximum means half the peak value. Fails with
/// [`Error::NoDetection`] when the peak is not positive, is below five
/// standard errors, is a non-unique maximum, or the half-maximum contour
/// leaves the grid.
pub fn psf_metrics(image: &ImageMap, stderr: Option<&ImageMap>, through: Option<(usize, usize)>) -> Result<PsfMetrics> {
    let grid = *image.grid();
    if let Some(se) = stderr {
        if !se.grid().same_sampling(&grid) {
            return Err(Error::GridMismatch {
                module: "correlator",
                reason: "image and stderr maps differ in sampling".into(),
            });
        }
    }
    let peak_index = match through {
        Some((ix, iy)) if ix < grid.nx() && iy < grid.ny() => grid.index(ix, iy),
        Some((ix, iy)) => {
            return Err(Error::param(
                "correlator",
                "through",
                format!("pixel ({ix}, {iy}) is outside the {}x{} image", grid.nx(), grid.ny()),
            ))
        }
        None => image.argmax(),
    };
    let peak_value = image.values()[peak_index];
    if !(peak_value.is_finite() && peak_value > 0.0) {
        return Err(Error::NoDetection {
            reason: format!("peak {peak_value:e} is not positive"),
        });
    }
    if through.is_none() && image.values().iter().filter(|&&v| v == peak_value).count() > 1 {
        return Err(Error::NoDetection {
            reason: "maximum is not unique (flat image)".into(),
        });
    }
    let se_at = |i: usize| stderr.map_or(0.0, |m| m.values()[i]);
    let peak_se = se_at(peak_index);
    if stderr.is_some() && peak_value <= 5.0 * peak_se {
        return Err(Error::NoDetection {
            reason: format!("peak {peak_value:e} is within 5 standard errors ({peak_se:e})"),
        });
    }

    let (px, py) = grid.coords_of(peak_index);
    let half = peak_value / 2.0;
    let sample = |ix: usize, iy: usize| {
        let i = grid.index(ix, iy);
        (image.values()[i], se_at(i))
    };
    let rays: [Vec<(f64, f64)>; 4] = [
        (px..grid.nx()).map(|ix| sample(ix, py)).collect(),
        (0..=px).rev().map(|ix| sample(ix, py)).collect(),
        (py..grid.ny()).map(|iy| sample(px, iy)).collect(),
        (0..=py).rev().map(|iy| sample(px, iy)).collect(),
    ];
    let mut found = Vec::with_capacity(4);
    for ray in &rays {
        found.push(ray_extent(ray, half, peak_se).ok_or_else(|| Error::NoDetection {
            reason: "half-maximum contour extends past the grid edge".into(),
        })?);
    }
    let pitch = grid.pitch();
    let fwhm_x = (found[0].0 + found[1].0) * pitch;
    let fwhm_y = (found[2].0 + found[3].0) * pitch;
    let fwhm_x_err = found[0].1.hypot(found[1].1) * pitch;
    let fwhm_y_err = found[2].1.hypot(found[3].1) * pitch;

    let background = border_median(image);
    let center = grid.point(px, py);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, p) in grid.points().enumerate() {
        let v = (image.values()[i] - background).max(0.0);
        num += v * (p - center).norm_sqr();
        den += v;
    }
    Ok(PsfMetrics {
        peak: (px, py),
        peak_value,
        fwhm_x,
        fwhm_y,
        second_moment_width: (num / den).sqrt(),
        fwhm_x_err,
        fwhm_y_err,
    })
}
