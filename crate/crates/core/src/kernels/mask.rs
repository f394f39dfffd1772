use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{normalize_with_transform, KernelError, Normalization, PointCloud, Result};

/// Gray levels at or above this count as interior.
pub const MASK_THRESHOLD: u8 = 128;

/// Binary raster; pixel (x, y) covers the unit square `[x, x+1) × [y, y+1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, pixels: Vec<bool>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(KernelError::Invalid(format!("{} pixels for {}x{}", pixels.len(), width, height)));
        }
        Ok(Mask { width, height, pixels })
    }

    pub fn from_gray(width: usize, height: usize, gray: &[u8]) -> Result<Self> {
        Mask::new(width, height, gray.iter().map(|&g| g >= MASK_THRESHOLD).collect())
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    pub fn interior(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.get(x, y))
            .collect()
    }

    /// Tight bounding box of interior pixels as (x0, y0, x1, y1), exclusive ends.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let px = self.interior();
        if px.is_empty() {
            return None;
        }
        let x0 = px.iter().map(|p| p.0).min().unwrap();
        let x1 = px.iter().map(|p| p.0).max().unwrap() + 1;
        let y0 = px.iter().map(|p| p.1).min().unwrap();
        let y1 = px.iter().map(|p| p.1).max().unwrap() + 1;
        Some((x0, y0, x1, y1))
    }
}

/// Draws `n` points uniformly over the interior area, then normalizes them.
/// Returns the normalized cloud and the map from pixel space to it.
pub fn sample_mask(mask: &Mask, n: usize, seed: u64) -> Result<(PointCloud, Normalization)> {
    if n == 0 {
        return Err(KernelError::Invalid("n must be at least 1".into()));
    }
    let inside = mask.interior();
    if inside.is_empty() {
        return Err(KernelError::EmptyMask);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let (x, y) = inside[rng.gen_range(0..inside.len())];
        coords.push(x as f64 + rng.gen::<f64>());
        coords.push(y as f64 + rng.gen::<f64>());
    }
    let raw = PointCloud::new(2, coords)?;
    match normalize_with_transform(&raw) {
        Ok(out) => Ok(out),
        // A single point has no extent; only translate it.
        Err(KernelError::Degenerate) => {
            let t = Normalization { center: raw.point(0).to_vec(), scale: 1.0 };
            Ok((raw.map(&t), t))
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank(w: usize, h: usize) -> Vec<bool> {
        vec![false; w * h]
    }

    #[test]
    fn single_pixel_support() {
        let mut px = blank(8, 8);
        px[3 * 8 + 5] = true;
        let m = Mask::new(8, 8, px).unwrap();
        let (c, t) = sample_mask(&m, 200, 1).unwrap();
        for p in c.points() {
            let q = t.invert(p);
            assert!((5.0..=6.0).contains(&q[0]) && (3.0..=4.0).contains(&q[1]), "{q:?}");
        }
        assert!((c.bbox_diagonal() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_mask_rejected() {
        let m = Mask::new(4, 4, blank(4, 4)).unwrap();
        assert!(matches!(sample_mask(&m, 10, 0), Err(KernelError::EmptyMask)));
    }

    #[test]
    fn threshold() {
        let m = Mask::from_gray(3, 1, &[127, 128, 255]).unwrap();
        assert_eq!(m.pixels, vec![false, true, true]);
    }

    #[test]
    fn two_blobs_split_binomially() {
        // Two 4x4 blobs of equal area.
        let (w, h) = (16, 8);
        let mut px = blank(w, h);
        for y in 2..6 {
            for x in 1..5 {
                px[y * w + x] = true;
                px[y * w + x + 10] = true;
            }
        }
        let m = Mask::new(w, h, px).unwrap();
        let n = 2048;
        let sigma = (n as f64 * 0.25).sqrt();
        for seed in 0..20 {
            let (c, t) = sample_mask(&m, n, seed).unwrap();
            let left = c.points().filter(|p| t.invert(p)[0] < 8.0).count() as f64;
            assert!((left - n as f64 / 2.0).abs() <= 3.0 * sigma, "seed {seed}: {left}");
        }
    }

    #[test]
    fn points_map_back_inside_interior_pixels() {
        let (w, h) = (20, 20);
        let mut px = blank(w, h);
        for y in 0..h {
            for x in 0..w {
                px[y * w + x] = (x * 7 + y * 3) % 5 == 0;
            }
        }
        let m = Mask::new(w, h, px).unwrap();
        let (c, t) = sample_mask(&m, 2048, 9).unwrap();
        for p in c.points() {
            let q = t.invert(p);
            let (x, y) = ((q[0] - 1e-9).floor() as usize, (q[1] - 1e-9).floor() as usize);
            let (x2, y2) = ((q[0] + 1e-9).floor().min(19.0) as usize, (q[1] + 1e-9).floor().min(19.0) as usize);
            assert!(m.get(x, y) || m.get(x2, y2) || m.get(x, y2) || m.get(x2, y), "{q:?}");
        }
    }
}
