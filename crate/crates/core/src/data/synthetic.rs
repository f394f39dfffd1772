use std::f64::consts::SQRT_2;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_cached, DataError, DatasetManifest, Domain, Entry, Placement, Result, Sampling, Split};
use crate::kernels::PointCloud;
use crate::rng::stream;

/// Half side of the square frame whose diagonal is 1.
pub const FRAME_HALF: f64 = 0.5 / SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Crosses,
    Squares,
    Rings,
    Bars,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Crosses => "crosses",
            Family::Squares => "squares",
            Family::Rings => "rings",
            Family::Bars => "bars",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        [Family::Crosses, Family::Squares, Family::Rings, Family::Bars].into_iter().find(|f| f.as_str() == s)
    }
}

/// Generator parameters. `size` is the shape's extent as a fraction of the
/// frame side, `offset` the center per axis as a fraction of the frame half
/// side, `stroke` the half thickness relative to the shape's half extent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub family: Family,
    pub count: usize,
    pub size: (f64, f64),
    pub offset: (f64, f64),
    pub stroke: (f64, f64),
    pub rotation: (f64, f64),
    pub seed: u64,
    /// 2, or 3 for shapes extruded along z.
    pub dim: usize,
}

impl SyntheticSpec {
    pub fn new(family: Family, count: usize, seed: u64) -> Self {
        SyntheticSpec {
            family,
            count,
            size: (0.3, 0.8),
            offset: (-0.2, 0.2),
            stroke: (0.15, 0.25),
            rotation: (0.0, 0.0),
            seed,
            dim: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [("size", self.size), ("offset", self.offset), ("stroke", self.stroke), ("rotation", self.rotation)];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(DataError::Invalid(format!("{name} range ({lo}, {hi}) is empty")));
            }
        }
        if self.size.0 <= 0.0 || self.size.1 > 1.0 {
            return Err(DataError::Invalid("size must lie in (0, 1]".into()));
        }
        if self.stroke.0 <= 0.0 || self.stroke.1 > 0.5 {
            return Err(DataError::Invalid("stroke must lie in (0, 0.5]".into()));
        }
        if self.count == 0 {
            return Err(DataError::Invalid("count must be at least 1".into()));
        }
        if !(2..=3).contains(&self.dim) {
            return Err(DataError::Invalid(format!("dim {} not supported", self.dim)));
        }
        Ok(())
    }

    /// Draws the attributes of every shape in order.
    pub fn draw(&self) -> Result<Vec<Shape>> {
        self.validate()?;
        let mut rng = stream(self.seed, 0);
        let mut u = |(lo, hi): (f64, f64)| if lo == hi { lo } else { rng.gen_range(lo..hi) };
        Ok((0..self.count)
            .map(|_| {
                let half = u(self.size) * FRAME_HALF;
                let center = [u(self.offset) * FRAME_HALF, u(self.offset) * FRAME_HALF];
                let stroke = u(self.stroke) * half;
                let rotation = u(self.rotation);
                Shape { family: self.family, center, half, stroke, rotation, dim: self.dim }
            })
            .collect())
    }
}

/// One drawn shape, in frame coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shape {
    pub family: Family,
    pub center: [f64; 2],
    pub half: f64,
    /// Absolute half thickness.
    pub stroke: f64,
    pub rotation: f64,
    pub dim: usize,
}

impl Shape {
    /// Membership in the shape's own axis-aligned frame.
    pub fn contains_local(&self, u: f64, v: f64) -> bool {
        let (h, t) = (self.half, self.stroke);
        let (au, av) = (u.abs(), v.abs());
        match self.family {
            Family::Crosses => (au <= t && av <= h) || (av <= t && au <= h),
            Family::Squares => au.max(av) <= h && au.max(av) >= h - 2.0 * t,
            Family::Rings => {
                let r = u.hypot(v);
                r <= h && r >= h - 2.0 * t
            }
            Family::Bars => au <= h && av <= t,
        }
    }

    /// `n` points uniform over the shape's area (volume when extruded).
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
        let (s, c) = self.rotation.sin_cos();
        let mut coords = Vec::with_capacity(n * self.dim);
        let mut got = 0;
        while got < n {
            let u = rng.gen_range(-self.half..=self.half);
            let v = rng.gen_range(-self.half..=self.half);
            if !self.contains_local(u, v) {
                continue;
            }
            coords.push(self.center[0] + c * u - s * v);
            coords.push(self.center[1] + s * u + c * v);
            if self.dim == 3 {
                coords.push(rng.gen_range(-0.5 * self.half..=0.5 * self.half));
            }
            got += 1;
        }
        PointCloud::new(self.dim, coords).expect("non-empty by construction")
    }
}

fn id(domain: Domain, i: usize) -> String {
    format!("{}-{i:05}", domain.as_str())
}

/// Output options of [`gen_synthetic`].
#[derive(Clone, Debug)]
pub struct GenOptions {
    /// Points per cached cloud.
    pub n: usize,
    /// Points per dense ground-truth cloud under `dense/`.
    pub dense: Option<usize>,
    /// Also write each shape redrawn in the other family, with the same
    /// attributes, under `gt/x2y/` and `gt/y2x/`.
    pub paired: bool,
}

impl GenOptions {
    pub fn new(n: usize) -> Self {
        GenOptions { n, dense: None, paired: false }
    }
}

/// Generates both domains under `out`: `clouds/<id>.txt`, optional dense
/// and paired ground truth, `attributes.csv` and `manifest.tsv`. All entries
/// start in the training split. The manifest seed is the X spec's.
pub fn gen_synthetic(spec_x: &SyntheticSpec, spec_y: &SyntheticSpec, out: &Path, opts: &GenOptions) -> Result<DatasetManifest> {
    let (n, dense) = (opts.n, opts.dense);
    if spec_x.dim != spec_y.dim {
        return Err(DataError::Invalid("domains must share the point dimension".into()));
    }
    if n == 0 || dense == Some(0) {
        return Err(DataError::Invalid("point counts must be at least 1".into()));
    }
    let mut entries = Vec::new();
    let mut attrs = String::from("id,family,cx,cy,half,stroke,rotation\n");
    for (domain, spec) in [(Domain::X, spec_x), (Domain::Y, spec_y)] {
        let shapes = spec.draw()?;
        shapes.par_iter().enumerate().try_for_each(|(i, shape)| -> Result<()> {
            let name = format!("{}.txt", id(domain, i));
            let mut rng = stream(spec.seed, 1 + i as u64);
            write_cached(&out.join("clouds").join(&name), &shape.sample(n, &mut rng))?;
            if let Some(m) = dense {
                let mut rng = stream(spec.seed, (1 << 32) + i as u64);
                write_cached(&out.join("dense").join(&name), &shape.sample(m, &mut rng))?;
            }
            if opts.paired {
                let (other, sub) = if domain == Domain::X { (spec_y.family, "x2y") } else { (spec_x.family, "y2x") };
                let twin = Shape { family: other, ..*shape };
                let mut rng = stream(spec.seed, (2 << 32) + i as u64);
                write_cached(&out.join("gt").join(sub).join(&name), &twin.sample(n, &mut rng))?;
            }
            Ok(())
        })?;
        for (i, s) in shapes.iter().enumerate() {
            let id = id(domain, i);
            let _ = writeln!(
                attrs,
                "{id},{},{:?},{:?},{:?},{:?},{:?}",
                s.family.as_str(),
                s.center[0],
                s.center[1],
                s.half,
                s.stroke,
                s.rotation
            );
            entries.push(Entry { domain, path: format!("clouds/{id}.txt").into(), id, split: Split::Train });
        }
    }
    std::fs::write(out.join("attributes.csv"), attrs).map_err(|e| DataError::io(out, e))?;
    let manifest = DatasetManifest {
        sampling: Sampling { n, seed: spec_x.seed, placement: Placement::Frame },
        entries,
        warnings: Vec::new(),
    };
    manifest.write(&out.join("manifest.tsv"))?;
    Ok(manifest)
}
