//! Network definitions built as autodiff graphs: the multi-scale encoder,
//! the shared decoder, latent translators, critics and the upsampling head.

mod config;
mod encoder;
mod heads;

pub use config::{NetConfig, StageConfig};
pub use encoder::{encode, encode_graph, init_encoder, padded_subcode, Encoded, EncoderPlan};
pub use heads::{
    decode, decode_graph, discriminate, discriminate_graph, init_critic, init_decoder,
    init_translator, init_upsampler, translate, translate_graph, update_running_stats, upsample_graph,
    BatchMoments, Decoded,
};

use crate::autodiff::{AutodiffError, Tensor};
use crate::kernels::KernelError;

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("expected {expected} points, got {got}")]
    PointCount { expected: usize, got: usize },
    #[error("expected {expected}-dimensional points, got {got}")]
    Dim { expected: usize, got: usize },
    #[error("expected input width {expected}, got {got}")]
    Width { expected: usize, got: usize },
    #[error("invalid network config: {0}")]
    Config(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, NetError>;

/// Overcomplete code: `z` is the concatenation of equal-width sub-codes,
/// sub-code `i` occupying `[i·w, (i+1)·w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub z: Vec<f64>,
    pub sub_dim: usize,
}

impl LatentCode {
    pub fn parts(&self) -> usize {
        self.z.len() / self.sub_dim
    }

    pub fn sub(&self, i: usize) -> &[f64] {
        &self.z[i * self.sub_dim..(i + 1) * self.sub_dim]
    }

    /// Sub-code `i` in place, zeros elsewhere.
    pub fn padded(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.z.len()];
        out[i * self.sub_dim..(i + 1) * self.sub_dim].copy_from_slice(self.sub(i));
        out
    }

    /// Splits a `[B × code]` tensor into per-row codes.
    pub fn from_rows(t: &Tensor, sub_dim: usize) -> Vec<LatentCode> {
        (0..t.rows()).map(|r| LatentCode { z: t.row(r).to_vec(), sub_dim }).collect()
    }

    pub fn stack(codes: &[LatentCode]) -> Result<Tensor> {
        let width = codes.first().map_or(0, |c| c.z.len());
        if let Some(c) = codes.iter().find(|c| c.z.len() != width) {
            return Err(NetError::Width { expected: width, got: c.z.len() });
        }
        Ok(Tensor::matrix(codes.len(), width, codes.iter().flat_map(|c| c.z.iter().copied()).collect())?)
    }
}
