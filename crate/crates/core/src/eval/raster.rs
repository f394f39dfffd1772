use super::{EvalError, Result};
use crate::kernels::PointCloud;

/// Default neighborhood radius in pixels.
pub const DEFAULT_RADIUS: f64 = 10.0;
pub const RASTER_SIZE: usize = 256;

/// Binary image; pixel (x, y) covers `[x, x+1) × [y, y+1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<bool>,
}

impl Raster {
    pub fn new(width: usize, height: usize) -> Self {
        Raster { width, height, pixels: vec![false; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize) {
        self.pixels[y * self.width + x] = true;
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
/// Degenerate inputs give one or two vertices.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        // All collinear: keep the two extremes.
        return vec![p[0], p[p.len() - 1]];
    }
    hull
}

const EPS: f64 = 1e-9;

/// Fills every pixel whose center lies in the closed convex polygon.
fn fill_hull(raster: &mut Raster, hull: &[[f64; 2]]) {
    let ymin = hull.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let ymax = hull.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let first = ((ymin - 0.5 - EPS).ceil().max(0.0)) as usize;
    let last = (ymax - 0.5 + EPS).floor();
    if last < 0.0 {
        return;
    }
    let last = (last as usize).min(raster.height.saturating_sub(1));
    for y in first..=last {
        let cy = y as f64 + 0.5;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..hull.len() {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            let (y0, y1) = (a[1].min(b[1]), a[1].max(b[1]));
            if cy < y0 - EPS || cy > y1 + EPS {
                continue;
            }
            if (b[1] - a[1]).abs() < EPS {
                lo = lo.min(a[0].min(b[0]));
                hi = hi.max(a[0].max(b[0]));
            } else {
                let t = ((cy - a[1]) / (b[1] - a[1])).clamp(0.0, 1.0);
                let x = a[0] + t * (b[0] - a[0]);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        if lo > hi {
            continue;
        }
        let x0 = (lo - 0.5 - EPS).ceil().max(0.0) as usize;
        let x1 = (hi - 0.5 + EPS).floor();
        if x1 < 0.0 {
            continue;
        }
        for x in x0..=(x1 as usize).min(raster.width - 1) {
            raster.set(x, y);
        }
    }
}

/// For every point, fills the convex hull of its neighbors within `r`
/// pixels, plus the pixel containing the point itself. Coordinates are in
/// pixel units; out-of-frame parts are clipped.
pub fn rasterize_cloud(cloud: &PointCloud, r: f64, width: usize, height: usize) -> Result<Raster> {
    if cloud.is_empty() {
        return Err(EvalError::Empty("cloud".into()));
    }
    if cloud.dim() != 2 {
        return Err(EvalError::Dim(cloud.dim()));
    }
    if !(r >= 0.0) || width == 0 || height == 0 {
        return Err(EvalError::Invalid(format!("radius {r}, raster {width}x{height}")));
    }
    let pts: Vec<[f64; 2]> = cloud.points().map(|p| [p[0], p[1]]).collect();
    let mut raster = Raster::new(width, height);
    let r2 = r * r;
    let mut nbrs = Vec::new();
    for &p in &pts {
        nbrs.clear();
        nbrs.extend(pts.iter().copied().filter(|q| (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) <= r2));
        fill_hull(&mut raster, &convex_hull(&nbrs));
        let (x, y) = (p[0].floor(), p[1].floor());
        if x >= 0.0 && y >= 0.0 && (x as usize) < width && (y as usize) < height {
            raster.set(x as usize, y as usize);
        }
    }
    Ok(raster)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(points: &[[f64; 2]]) -> PointCloud {
        PointCloud::from_points(2, points).unwrap()
    }

    #[test]
    fn single_point_fills_its_pixel() {
        let r = rasterize_cloud(&cloud(&[[10.3, 20.7]]), 10.0, 32, 32).unwrap();
        assert_eq!(r.count(), 1);
        assert!(r.get(10, 20));
    }

    #[test]
    fn triangle_matches_center_test() {
        let tri = [[2.2, 3.1], [9.7, 4.4], [4.9, 11.6]];
        let r = rasterize_cloud(&cloud(&tri), 10.0, 16, 16).unwrap();
        // Independent oracle: barycentric sign test at each pixel center.
        let sign = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (a[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (a[1] - c[1]);
        let mut expected = Raster::new(16, 16);
        for y in 0..16 {
            for x in 0..16 {
                let c = [x as f64 + 0.5, y as f64 + 0.5];
                let d = [sign(c, tri[0], tri[1]), sign(c, tri[1], tri[2]), sign(c, tri[2], tri[0])];
                let inside = d.iter().all(|&v| v >= 0.0) || d.iter().all(|&v| v <= 0.0);
                if inside {
                    expected.set(x, y);
                }
            }
        }
        for p in tri {
            expected.set(p[0] as usize, p[1] as usize);
        }
        assert!(expected.count() > 20);
        assert_eq!(r, expected);
    }

    #[test]
    fn far_points_do_not_connect() {
        let r = rasterize_cloud(&cloud(&[[1.5, 1.5], [30.5, 1.5]]), 10.0, 32, 4).unwrap();
        assert_eq!(r.count(), 2);
        let r = rasterize_cloud(&cloud(&[[1.5, 1.5], [8.5, 1.5]]), 10.0, 32, 4).unwrap();
        assert_eq!(r.count(), 8);
    }

    #[test]
    fn hull_of_square_with_interior_and_collinear_points() {
        let h = convex_hull(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [2.0, 2.0], [1.0, 1.0], [0.0, 2.0]]);
        assert_eq!(h, vec![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]);
        assert_eq!(convex_hull(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]), vec![[0.0, 0.0], [2.0, 2.0]]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn adding_points_never_clears_pixels(
            base in prop::collection::vec((0.0f64..40.0, 0.0f64..40.0), 1..30),
            extra in prop::collection::vec((0.0f64..40.0, 0.0f64..40.0), 1..10),
        ) {
            let a: Vec<[f64; 2]> = base.iter().map(|&(x, y)| [x, y]).collect();
            let mut b = a.clone();
            b.extend(extra.iter().map(|&(x, y)| [x, y]));
            let ra = rasterize_cloud(&cloud(&a), 6.0, 40, 40).unwrap();
            let rb = rasterize_cloud(&cloud(&b), 6.0, 40, 40).unwrap();
            prop_assert!(ra.pixels.iter().zip(&rb.pixels).all(|(p, q)| !p || *q));
        }
    }
}
