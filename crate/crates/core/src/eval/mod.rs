//! Metrics and analyses: rasterized MSE/IOU, Chamfer and EMD/n, latent
//! code-change profiles, discretized-code distances, and a small family
//! classifier for unpaired translation checks.

mod classifier;
mod latent;
mod metrics;
mod raster;
mod recon;

pub use classifier::{occupancy, FamilyClassifier};
pub use latent::{code_change_profile, embedding_distances, CodeChangeProfile, Embedding};
pub use metrics::{mse_iou, shape_metrics, GeometryCheck, MetricsTable, ShapeMetrics};
pub use raster::{convex_hull, rasterize_cloud, Raster, DEFAULT_RADIUS, RASTER_SIZE};
pub use recon::{reconstruction_errors, ReconstructionErrors};

use crate::kernels::KernelError;
use crate::networks::NetError;
use crate::transport::TransportError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("empty {0}")]
    Empty(String),
    #[error("expected 2D points, got {0}D")]
    Dim(usize),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Net(#[from] NetError),
}

pub type Result<T> = std::result::Result<T, EvalError>;
