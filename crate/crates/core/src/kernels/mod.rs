//! Point-cloud geometry: normalization, farthest-point sampling, ball-query
//! grouping and uniform sampling of binary masks.

mod cloud;
mod grouping;
mod io;
mod mask;

pub use cloud::{normalize, normalize_with_transform, Normalization, PointCloud};
pub use grouping::{ball_query, farthest_point_sample, farthest_point_sample_from, GroupingResult};
pub use io::{format_cloud, parse_cloud, read_cloud, read_pgm, write_cloud, write_pgm};
pub use mask::{sample_mask, Mask, MASK_THRESHOLD};

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("point cloud dimension must be 2 or 3, got {0}")]
    Dim(usize),
    #[error("point cloud is empty")]
    Empty,
    #[error("point cloud has {values} values, not a multiple of dim {dim}")]
    Ragged { values: usize, dim: usize },
    #[error("point cloud contains non-finite coordinates")]
    NonFinite,
    #[error("degenerate bounding box (all points identical)")]
    Degenerate,
    #[error("requested {k} samples from {n} points")]
    TooMany { k: usize, n: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("mask has no interior pixels")]
    EmptyMask,
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KernelError>;
