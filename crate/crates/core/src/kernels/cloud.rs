use super::{KernelError, Result};

/// Ordered set of 2D or 3D points stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(KernelError::Dim(dim));
        }
        if coords.is_empty() {
            return Err(KernelError::Empty);
        }
        if coords.len() % dim != 0 {
            return Err(KernelError::Ragged { values: coords.len(), dim });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite);
        }
        Ok(PointCloud { dim, coords })
    }

    pub fn from_points<P: AsRef<[f64]>>(dim: usize, points: &[P]) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(KernelError::Ragged { values: p.len(), dim });
            }
            coords.extend_from_slice(p);
        }
        PointCloud::new(dim, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn dist2(&self, i: usize, j: usize) -> f64 {
        self.point(i).iter().zip(self.point(j)).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Per-axis (min, max).
    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.points() {
            for d in 0..self.dim {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bbox();
        lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
    }

    pub fn bbox_center(&self) -> Vec<f64> {
        let (lo, hi) = self.bbox();
        lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Mean of the points.
    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for p in self.points() {
            for d in 0..self.dim {
                c[d] += p[d];
            }
        }
        let n = self.len() as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    /// Cloud made of the given point indices, in order.
    pub fn select(&self, idx: &[usize]) -> PointCloud {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            coords.extend_from_slice(self.point(i));
        }
        PointCloud { dim: self.dim, coords }
    }

    pub fn map(&self, t: &Normalization) -> PointCloud {
        let coords = self
            .coords
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - t.center[i % self.dim]) * t.scale)
            .collect();
        PointCloud { dim: self.dim, coords }
    }

    /// Applies `f` to every point; `f` must preserve the dimension.
    pub fn map_points<F: Fn(&[f64]) -> Vec<f64>>(&self, f: F) -> PointCloud {
        let coords = self.points().flat_map(f).collect::<Vec<_>>();
        assert_eq!(coords.len(), self.coords.len(), "map_points changed the dimension");
        PointCloud { dim: self.dim, coords }
    }
}

/// `p -> (p - center) * scale`, the map applied by [`normalize`].
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub center: Vec<f64>,
    pub scale: f64,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Normalization { center: vec![0.0; dim], scale: 1.0 }
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.center).map(|(v, c)| (v - c) * self.scale).collect()
    }

    pub fn invert(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.center).map(|(v, c)| v / self.scale + c).collect()
    }
}

/// Translates the bounding-box center to the origin and scales uniformly so
/// the bounding-box diagonal has length 1.
pub fn normalize(cloud: &PointCloud) -> Result<PointCloud> {
    normalize_with_transform(cloud).map(|(c, _)| c)
}

pub fn normalize_with_transform(cloud: &PointCloud) -> Result<(PointCloud, Normalization)> {
    let diag = cloud.bbox_diagonal();
    if !(diag > 1e-12) {
        return Err(KernelError::Degenerate);
    }
    let t = Normalization { center: cloud.bbox_center(), scale: 1.0 / diag };
    Ok((cloud.map(&t), t))
}
