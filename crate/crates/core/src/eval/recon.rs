use rayon::prelude::*;

use super::Result;
use crate::autodiff::{ParamSet, Tensor};
use crate::kernels::PointCloud;
use crate::networks::{decode, encode, EncoderPlan, LatentCode, NetConfig};
use crate::transport::{emd_approx, emd_exact, AuctionConfig, EXACT_MAX_POINTS};

/// EMD/n of each cloud's reconstruction from `z` and from every zero-padded
/// sub-code.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionErrors {
    pub z: Vec<f64>,
    /// `subs[i][k]`: cloud `k` decoded from sub-code `i`.
    pub subs: Vec<Vec<f64>>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

impl ReconstructionErrors {
    pub fn mean_z(&self) -> f64 {
        mean(&self.z)
    }

    pub fn mean_subs(&self) -> Vec<f64> {
        self.subs.iter().map(|s| mean(s)).collect()
    }
}

fn emd_per_n(a: &PointCloud, b: &PointCloud, auction: &AuctionConfig) -> Result<f64> {
    let m = if a.len() <= EXACT_MAX_POINTS { emd_exact(a, b)? } else { emd_approx(a, b, auction)? };
    Ok(m.cost / a.len() as f64)
}

pub fn reconstruction_errors(
    ae: &ParamSet,
    net: &NetConfig,
    plans: &[EncoderPlan],
    clouds: &[PointCloud],
    auction: &AuctionConfig,
) -> Result<ReconstructionErrors> {
    let parts = net.stages.len();
    let mut out = ReconstructionErrors { z: Vec::new(), subs: vec![Vec::new(); parts] };
    for (chunk, targets) in plans.chunks(32).zip(clouds.chunks(32)) {
        let refs: Vec<&EncoderPlan> = chunk.iter().collect();
        let codes = encode(ae, net, &refs)?;
        let mut rows: Vec<LatentCode> = codes.clone();
        for i in 0..parts {
            rows.extend(codes.iter().map(|c| LatentCode { z: c.padded(i), sub_dim: c.sub_dim }));
        }
        let pts: Tensor = decode(ae, net, &LatentCode::stack(&rows)?)?;
        let per = net.points * net.dim;
        let b = chunk.len();
        let errs: Vec<f64> = (0..rows.len())
            .into_par_iter()
            .map(|r| {
                let cloud = PointCloud::new(net.dim, pts.data()[r * per..(r + 1) * per].to_vec())?;
                emd_per_n(&cloud, &targets[r % b], auction)
            })
            .collect::<Result<_>>()?;
        out.z.extend_from_slice(&errs[..b]);
        for i in 0..parts {
            out.subs[i].extend_from_slice(&errs[(i + 1) * b..(i + 2) * b]);
        }
    }
    Ok(out)
}
