use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::synthetic::FRAME_HALF;
use super::{write_cached, DataError, DatasetManifest, Domain, Entry, Placement, Result, Sampling, Split};
use crate::kernels::{read_pgm, sample_mask, Mask, Normalization, PointCloud};
use crate::rng::{derive, phase};

/// Expected longest bounding-box edge of a pre-normalized glyph, in pixels.
pub const GLYPH_EXTENT: usize = 248;
pub const GLYPH_TOLERANCE: usize = 2;

/// Maps pixel coordinates of a `width × height` raster to the unit-diagonal
/// frame: the raster center goes to the origin, the longer side to the
/// frame side.
pub fn frame_transform(width: usize, height: usize) -> Normalization {
    let side = width.max(height) as f64;
    Normalization { center: vec![width as f64 / 2.0, height as f64 / 2.0], scale: 2.0 * FRAME_HALF / side }
}

fn norm_path(cloud: &Path) -> PathBuf {
    let mut s = cloud.as_os_str().to_owned();
    s.push(".norm");
    PathBuf::from(s)
}

/// Writes the pixel-to-cloud map next to a cached cloud.
pub fn write_normalization(cloud: &Path, t: &Normalization) -> Result<()> {
    let c: Vec<String> = t.center.iter().map(|v| format!("{v:?}")).collect();
    let p = norm_path(cloud);
    std::fs::write(&p, format!("{} {:?}\n", c.join(" "), t.scale)).map_err(|e| DataError::io(&p, e))
}

pub fn read_normalization(cloud: &Path) -> Result<Normalization> {
    let p = norm_path(cloud);
    let text = std::fs::read_to_string(&p).map_err(|e| DataError::io(&p, e))?;
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| DataError::Invalid(format!("malformed {}", p.display())))?;
    let Some((&scale, center)) = vals.split_last().filter(|(_, c)| !c.is_empty()) else {
        return Err(DataError::Invalid(format!("malformed {}", p.display())));
    };
    Ok(Normalization { center: center.to_vec(), scale })
}

/// Options for [`ingest_masks`].
#[derive(Clone, Debug)]
pub struct IngestOptions {
    pub n: usize,
    pub seed: u64,
    pub placement: Placement,
    /// Also cache a denser sample of each mask under `dense/`.
    pub dense: Option<usize>,
}

impl IngestOptions {
    pub fn new(n: usize, seed: u64) -> Self {
        IngestOptions { n, seed, placement: Placement::Frame, dense: None }
    }
}

fn mask_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| DataError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| DataError::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn place(mask: &Mask, n: usize, seed: u64, placement: Placement) -> Result<(PointCloud, Normalization)> {
    let (cloud, t) = sample_mask(mask, n, seed)?;
    Ok(match placement {
        Placement::Cloud => (cloud, t),
        Placement::Frame => {
            let f = frame_transform(mask.width, mask.height);
            (cloud.map_points(|p| f.apply(&t.invert(p))), f)
        }
    })
}

fn extent_warning(mask: &Mask) -> Option<String> {
    let (x0, y0, x1, y1) = mask.bbox()?;
    let longest = (x1 - x0).max(y1 - y0);
    (longest.abs_diff(GLYPH_EXTENT) > GLYPH_TOLERANCE)
        .then(|| format!("longest bbox edge {longest} px, expected {GLYPH_EXTENT} ± {GLYPH_TOLERANCE}"))
}

struct Ingested {
    entry: Entry,
    warning: Option<String>,
}

/// Samples every `*.pgm` under `dir/x` and `dir/y` into cached clouds under
/// `out/clouds`, with the pixel-to-cloud map in a `.norm` sidecar, and
/// writes `out/manifest.tsv`. Ids are `<domain>-<file stem>`.
pub fn ingest_masks(dir: &Path, out: &Path, opts: &IngestOptions) -> Result<DatasetManifest> {
    if opts.n == 0 || opts.dense == Some(0) {
        return Err(DataError::Invalid("point counts must be at least 1".into()));
    }
    let mut lists = Vec::new();
    for domain in [Domain::X, Domain::Y] {
        let files = mask_files(&dir.join(domain.as_str()))?;
        if files.is_empty() {
            return Err(DataError::Empty(format!("no PGM masks for domain {}", domain.as_str())));
        }
        lists.push((domain, files));
    }
    let mut items = Vec::new();
    for (domain, files) in lists {
        let stream = if domain == Domain::X { phase::DATA_X } else { phase::DATA_Y };
        let done: Vec<Ingested> = files
            .par_iter()
            .enumerate()
            .map(|(i, file)| -> Result<Ingested> {
                let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let id = format!("{}-{stem}", domain.as_str());
                let mask = read_pgm(file).map_err(|e| DataError::File(file.clone(), e.to_string()))?;
                let seed = derive(opts.seed, stream, i as u64);
                let (cloud, t) = place(&mask, opts.n, seed, opts.placement)
                    .map_err(|e| DataError::File(file.clone(), e.to_string()))?;
                let rel = PathBuf::from(format!("clouds/{id}.txt"));
                write_cached(&out.join(&rel), &cloud)?;
                write_normalization(&out.join(&rel), &t)?;
                if let Some(m) = opts.dense {
                    let seed = derive(opts.seed, stream, (1 << 32) + i as u64);
                    let (dense, _) = place(&mask, m, seed, opts.placement)?;
                    write_cached(&out.join(format!("dense/{id}.txt")), &dense)?;
                }
                Ok(Ingested { entry: Entry { domain, id, split: Split::Train, path: rel }, warning: extent_warning(&mask) })
            })
            .collect::<Result<_>>()?;
        items.extend(done);
    }
    items.sort_by(|a, b| (a.entry.domain, &a.entry.id).cmp(&(b.entry.domain, &b.entry.id)));
    let warnings: Vec<(String, String)> =
        items.iter().filter_map(|it| it.warning.clone().map(|w| (it.entry.id.clone(), w))).collect();
    for (id, w) in &warnings {
        log::warn!("{id}: {w}");
    }
    let manifest = DatasetManifest {
        sampling: Sampling { n: opts.n, seed: opts.seed, placement: opts.placement },
        entries: items.into_iter().map(|it| it.entry).collect(),
        warnings,
    };
    manifest.write(&out.join("manifest.tsv"))?;
    Ok(manifest)
}
