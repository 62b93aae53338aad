use crate::error::{Error, Result};
use crate::geometry::{Grid2D, ImageMap};

/// Running sums for the bucket/reference covariance
/// `⟨B·I(ρ_p)⟩ − ⟨B⟩⟨I(ρ_p)⟩`.
///
/// Besides the sums needed for the covariance itself, the per-pixel mixed
/// moments up to `B²I²` are kept so the estimator's standard error can be
/// reported. Every field is a plain sum, so merging two partial estimates
/// is addition.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostImageEstimate {
    grid: Grid2D,
    frames: u64,
    sum_b: f64,
    sum_b2: f64,
    sum_i: Vec<f64>,
    sum_i2: Vec<f64>,
    sum_bi: Vec<f64>,
    sum_b2i: Vec<f64>,
    sum_bi2: Vec<f64>,
    sum_b2i2: Vec<f64>,
}

/// Finalized estimate. `ghost` is the biased (1/N) sample covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostImage {
    pub ghost: ImageMap,
    pub background: ImageMap,
    pub stderr: ImageMap,
    pub frames: u64,
}

impl GhostImageEstimate {
    pub fn new(grid: Grid2D) -> Self {
        let zeros = vec![0.0; grid.len()];
        GhostImageEstimate {
            grid,
            frames: 0,
            sum_b: 0.0,
            sum_b2: 0.0,
            sum_i: zeros.clone(),
            sum_i2: zeros.clone(),
            sum_bi: zeros.clone(),
            sum_b2i: zeros.clone(),
            sum_bi2: zeros.clone(),
            sum_b2i2: zeros,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn mean_bucket(&self) -> f64 {
        self.sum_b / self.frames as f64
    }

    pub fn accumulate(&mut self, bucket: f64, intensity: &[f64]) -> Result<()> {
        if intensity.len() != self.grid.len() {
            return Err(Error::GridMismatch {
                module: "correlator",
                reason: format!("intensity map has {} pixels, estimate has {}", intensity.len(), self.grid.len()),
            });
        }
        let b = bucket;
        let b2 = b * b;
        self.frames += 1;
        self.sum_b += b;
        self.sum_b2 += b2;
        for (k, &i) in intensity.iter().enumerate() {
            let i2 = i * i;
            self.sum_i[k] += i;
            self.sum_i2[k] += i2;
            self.sum_bi[k] += b * i;
            self.sum_b2i[k] += b2 * i;
            self.sum_bi2[k] += b * i2;
            self.sum_b2i2[k] += b2 * i2;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &GhostImageEstimate) -> Result<()> {
        if !self.grid.same_sampling(&other.grid) {
            return Err(Error::GridMismatch {
                module: "correlator",
                reason: "cannot merge estimates on different grids".into(),
            });
        }
        self.frames += other.frames;
        self.sum_b += other.sum_b;
        self.sum_b2 += other.sum_b2;
        let pairs = [
            (&mut self.sum_i, &other.sum_i),
            (&mut self.sum_i2, &other.sum_i2),
            (&mut self.sum_bi, &other.sum_bi),
            (&mut self.sum_b2i, &other.sum_b2i),
            (&mut self.sum_bi2, &other.sum_bi2),
            (&mut self.sum_b2i2, &other.sum_b2i2),
        ];
        for (mine, theirs) in pairs {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
        Ok(())
    }

    /// Ghost image, featureless background `⟨B⟩⟨I⟩`, and the standard error
    /// of each ghost pixel.
    pub fn finalize(&self) -> Result<GhostImage> {
        if self.frames < 2 {
            return Err(Error::InsufficientData { frames: self.frames });
        }
        let n = self.frames as f64;
        let mb = self.sum_b / n;
        let mb2 = self.sum_b2 / n;
        let len = self.grid.len();
        let mut ghost = Vec::with_capacity(len);
        let mut background = Vec::with_capacity(len);
        let mut stderr = Vec::with_capacity(len);
        for k in 0..len {
            let mi = self.sum_i[k] / n;
            let mi2 = self.sum_i2[k] / n;
            let mbi = self.sum_bi[k] / n;
            let mb2i = self.sum_b2i[k] / n;
            let mbi2 = self.sum_bi2[k] / n;
            let mb2i2 = self.sum_b2i2[k] / n;
            let cov = mbi - mb * mi;
            // E[(B − b̄)²(I − ī)²] from raw moments.
            let centered = mb2i2 - 2.0 * mi * mb2i + mi * mi * mb2 - 2.0 * mb * mbi2
                + 4.0 * mb * mi * mbi
                + mb * mb * mi2
                - 3.0 * mb * mb * mi * mi;
            let var = (centered - cov * cov).max(0.0);
            ghost.push(cov);
            background.push(mb * mi);
            stderr.push((var / n).sqrt());
        }
        Ok(GhostImage {
            ghost: ImageMap::new(self.grid, ghost)?,
            background: ImageMap::new(self.grid, background)?,
            stderr: ImageMap::new(self.grid, stderr)?,
            frames: self.frames,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid2D {
        Grid2D::square(3, 1.0).unwrap()
    }

    #[test]
    fn first_sample() {
        let mut e = GhostImageEstimate::new(grid());
        e.accumulate(2.0, &[1.0; 9]).unwrap();
        assert_eq!(e.frames(), 1);
        assert_eq!(e.mean_bucket(), 2.0);
        assert!(matches!(e.finalize(), Err(Error::InsufficientData { frames: 1 })));
        assert!(e.accumulate(1.0, &[1.0; 4]).is_err());
    }

    #[test]
    fn identical_frames_have_zero_covariance() {
        let mut e = GhostImageEstimate::new(grid());
        let i: Vec<f64> = (0..9).map(|k| k as f64 + 0.5).collect();
        e.accumulate(3.0, &i).unwrap();
        e.accumulate(3.0, &i).unwrap();
        let g = e.finalize().unwrap();
        assert!(g.ghost.values().iter().all(|&v| v.abs() < 1e-12));
        assert!((g.background.get(1, 0) - 3.0 * 1.5).abs() < 1e-12);
    }

    #[test]
    fn proportional_reference_gives_scaled_variance() {
        let mut e = GhostImageEstimate::new(grid());
        let buckets = [1.0, 4.0, 2.5, 7.0, 0.5];
        for &b in &buckets {
            e.accumulate(b, &[2.0 * b; 9]).unwrap();
        }
        let n = buckets.len() as f64;
        let mean = buckets.iter().sum::<f64>() / n;
        let var = buckets.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / n;
        let g = e.finalize().unwrap();
        for &v in g.ghost.values() {
            assert!((v - 2.0 * var).abs() < 1e-12 * var);
        }
    }

    #[test]
    fn shuffled_pairing_averages_to_zero() {
        // Independent B and I: the covariance must vanish within 4 stderr.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut e = GhostImageEstimate::new(grid());
        for _ in 0..20_000 {
            let b: f64 = -rng.random::<f64>().ln();
            let i: Vec<f64> = (0..9).map(|_| -rng.random::<f64>().ln()).collect();
            e.accumulate(b, &i).unwrap();
        }
        let g = e.finalize().unwrap();
        for (v, s) in g.ghost.values().iter().zip(g.stderr.values()) {
            assert!(v.abs() < 4.0 * s, "{v} vs {s}");
            // Var[(B − 1)(I − 1)] = Var(B)·Var(I) = 1 for unit exponentials.
            assert!((s - (1.0f64 / 20_000.0).sqrt()).abs() < 0.2 * s);
        }
    }

    proptest! {
        #[test]
        fn merge_matches_single_pass(
            samples in prop::collection::vec((0.0f64..10.0, prop::collection::vec(0.0f64..10.0, 9)), 2..40),
            split in 0usize..40,
        ) {
            let split = split.min(samples.len());
            let mut whole = GhostImageEstimate::new(grid());
            let mut left = GhostImageEstimate::new(grid());
            let mut right = GhostImageEstimate::new(grid());
            for (k, (b, i)) in samples.iter().enumerate() {
                whole.accumulate(*b, i).unwrap();
                if k < split { left.accumulate(*b, i).unwrap() } else { right.accumulate(*b, i).unwrap() }
            }
            left.merge(&right).unwrap();
            prop_assert_eq!(left.frames(), whole.frames());
            let a = left.finalize().unwrap();
            let b = whole.finalize().unwrap();
            let scale = b.background.values().iter().fold(1e-300f64, |m, v| m.max(v.abs()));
            for (x, y) in a.ghost.values().iter().zip(b.ghost.values()) {
                prop_assert!((x - y).abs() <= 1e-10 * scale);
            }
        }
    }
}
