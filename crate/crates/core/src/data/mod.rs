//! Datasets: manifests, synthetic domain generators, mask ingestion, splits
//! and checksummed cloud caches.

mod cache;
mod ingest;
mod manifest;
mod synthetic;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

pub use cache::{read_cached, sha256_hex, write_cached};
pub use ingest::{
    frame_transform, ingest_masks, read_normalization, write_normalization, IngestOptions, GLYPH_EXTENT,
    GLYPH_TOLERANCE,
};
pub use manifest::{DatasetManifest, Domain, Entry, Placement, Sampling, Split};
pub use synthetic::{gen_synthetic, Family, GenOptions, Shape, SyntheticSpec, FRAME_HALF};

use crate::kernels::{KernelError, PointCloud};
use crate::rng::{phase, stream};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid dataset request: {0}")]
    Invalid(String),
    #[error("empty: {0}")]
    Empty(String),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("checksum mismatch for {0}")]
    Checksum(PathBuf),
    #[error("{0}: {1}")]
    File(PathBuf, String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl DataError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Tags a shuffled `fraction` of each domain as test. Every domain with at
/// least two entries keeps at least one item on each side; a single-entry
/// domain stays in training.
pub fn split(manifest: &DatasetManifest, fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::Invalid(format!("test fraction {fraction} outside (0, 1)")));
    }
    let mut out = manifest.clone();
    let mut rng = stream(seed, phase::SPLIT);
    for d in [Domain::X, Domain::Y] {
        let mut idx: Vec<usize> = (0..out.entries.len()).filter(|&i| out.entries[i].domain == d).collect();
        if idx.is_empty() {
            return Err(DataError::Empty(format!("domain {} has no entries", d.as_str())));
        }
        idx.shuffle(&mut rng);
        let n = idx.len();
        let test = if n < 2 { 0 } else { ((fraction * n as f64).round() as usize).clamp(1, n - 1) };
        for (k, &i) in idx.iter().enumerate() {
            out.entries[i].split = if k < test { Split::Test } else { Split::Train };
        }
    }
    Ok(out)
}

/// Loads the cached clouds of one domain and split, in manifest order.
/// `root` is the manifest's directory.
pub fn load_clouds(manifest: &DatasetManifest, root: &Path, d: Domain, s: Split) -> Result<Vec<(Entry, PointCloud)>> {
    manifest
        .select(d, s)
        .into_iter()
        .map(|e| Ok((e.clone(), read_cached(&root.join(&e.path))?)))
        .collect()
}

/// The dense ground truth cached next to an entry, if generated.
pub fn dense_path(root: &Path, e: &Entry) -> PathBuf {
    root.join("dense").join(format!("{}.txt", e.id))
}

/// The paired translation ground truth of an entry, if generated.
pub fn paired_path(root: &Path, e: &Entry) -> PathBuf {
    let sub = if e.domain == Domain::X { "x2y" } else { "y2x" };
    root.join("gt").join(sub).join(format!("{}.txt", e.id))
}
