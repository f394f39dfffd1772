//! Phase runners seeded from one root seed, checkpoint files, and inference
//! from input clouds to translated (optionally upsampled) clouds.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::autodiff::{read_checkpoint, write_checkpoint, CheckpointError, Graph, ParamSet, Precision, Tensor};
use crate::kernels::PointCloud;
use crate::networks::{decode_graph, encode, upsample_graph, EncoderPlan, LatentCode, NetConfig, NetError};
use crate::rng::{phase, stream};
use crate::training::{
    train_autoencoder, train_translators, train_upsampler, AeData, Direction, TrainConfig, TrainError, TrainReport,
    TranslatorSet,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("checkpoint {0}: {1}")]
    Checkpoint(PathBuf, CheckpointError),
    #[error("checkpoint {0} lacks {1}")]
    Incomplete(PathBuf, String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

const CHUNK: usize = 64;

/// Encoder plans for every cloud, built in parallel.
pub fn plans(net: &NetConfig, clouds: &[PointCloud]) -> Result<Vec<EncoderPlan>> {
    Ok(clouds.par_iter().map(|c| EncoderPlan::new(net, c, net.fps_seed)).collect::<std::result::Result<_, _>>()?)
}

/// Latent codes `[N × code]` of the planned clouds.
pub fn codes(ae: &ParamSet, net: &NetConfig, plans: &[EncoderPlan]) -> Result<Tensor> {
    let mut all = Vec::with_capacity(plans.len());
    for chunk in plans.chunks(CHUNK) {
        let refs: Vec<&EncoderPlan> = chunk.iter().collect();
        all.extend(encode(ae, net, &refs)?);
    }
    Ok(LatentCode::stack(&all)?)
}

fn split_rows(t: &Tensor, dim: usize, points: usize) -> Result<Vec<PointCloud>> {
    let per = points * dim;
    t.data()
        .chunks(per)
        .map(|c| PointCloud::new(dim, c.to_vec()).map_err(|e| PipelineError::Net(e.into())))
        .collect()
}

/// Decodes `[R × code]` codes, optionally applying the upsampling head.
pub fn decode_codes(net: &NetConfig, ae: &ParamSet, up: Option<&ParamSet>, codes: &Tensor) -> Result<Vec<PointCloud>> {
    let mut out = Vec::with_capacity(codes.rows());
    for start in (0..codes.rows()).step_by(CHUNK) {
        let rows = CHUNK.min(codes.rows() - start);
        let slice = Tensor::matrix(rows, codes.cols(), codes.data()[start * codes.cols()..(start + rows) * codes.cols()].to_vec())
            .map_err(|e| PipelineError::Net(e.into()))?;
        let mut g = Graph::new();
        let p = ae.bind(&mut g, false);
        let c = g.constant(slice);
        let d = decode_graph(&mut g, &p, net, c)?;
        let (node, points) = match up {
            Some(up) => {
                let q = up.bind(&mut g, false);
                (upsample_graph(&mut g, &q, net, d.penultimate, d.points)?, net.points * net.upsample_m)
            }
            None => (d.points, net.points),
        };
        let t = g.get(node).map_err(|e| PipelineError::Net(e.into()))?;
        out.extend(split_rows(t, net.dim, points)?);
    }
    Ok(out)
}

/// Trained parameters of all three phases.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub net: NetConfig,
    pub ae: ParamSet,
    pub translators: Option<TranslatorSet>,
    pub upsampler: Option<ParamSet>,
}

impl Model {
    /// Encodes, translates and decodes each cloud.
    pub fn translate(&self, dir: Direction, clouds: &[PointCloud], upsample: bool) -> Result<Vec<PointCloud>> {
        let set = self.translators.as_ref().ok_or_else(|| PipelineError::Invalid("no translators trained".into()))?;
        let up = match (upsample, &self.upsampler) {
            (false, _) => None,
            (true, Some(u)) => Some(u),
            (true, None) => return Err(PipelineError::Invalid("no upsampler trained".into())),
        };
        let z = codes(&self.ae, &self.net, &plans(&self.net, clouds)?)?;
        let t = set.translate(&self.net, dir, &z)?;
        decode_codes(&self.net, &self.ae, up, &t)
    }

    /// Plain reconstruction through the autoencoder.
    pub fn reconstruct(&self, clouds: &[PointCloud]) -> Result<Vec<PointCloud>> {
        let z = codes(&self.ae, &self.net, &plans(&self.net, clouds)?)?;
        decode_codes(&self.net, &self.ae, None, &z)
    }
}

pub fn run_autoencoder(
    net: &NetConfig,
    tc: &TrainConfig,
    clouds: Vec<PointCloud>,
    seed: u64,
    report: &mut TrainReport,
) -> Result<ParamSet> {
    let data = AeData::new(net, clouds)?;
    Ok(train_autoencoder(net, tc, &data, &mut stream(seed, phase::AE), report)?)
}

pub fn run_translators(
    net: &NetConfig,
    tc: &TrainConfig,
    ae: &ParamSet,
    clouds_x: &[PointCloud],
    clouds_y: &[PointCloud],
    seed: u64,
    report: &mut TrainReport,
) -> Result<TranslatorSet> {
    let zx = codes(ae, net, &plans(net, clouds_x)?)?;
    let zy = codes(ae, net, &plans(net, clouds_y)?)?;
    Ok(train_translators(net, tc, &zx, &zy, &mut stream(seed, phase::TRANSLATOR), report)?)
}

pub fn run_upsampler(
    net: &NetConfig,
    tc: &TrainConfig,
    ae: &ParamSet,
    clouds: Vec<PointCloud>,
    dense: &[PointCloud],
    seed: u64,
    report: &mut TrainReport,
) -> Result<ParamSet> {
    let data = AeData::new(net, clouds)?;
    Ok(train_upsampler(net, tc, ae, &data, dense, &mut stream(seed, phase::UPSAMPLER), report)?)
}

pub fn save_params(path: &Path, params: &ParamSet) -> Result<()> {
    let err = |e: CheckpointError| PipelineError::Checkpoint(path.to_path_buf(), e);
    let f = File::create(path).map_err(|e| err(e.into()))?;
    write_checkpoint(BufWriter::new(f), params, Precision::F64).map_err(err)
}

pub fn load_params(path: &Path) -> Result<ParamSet> {
    let err = |e: CheckpointError| PipelineError::Checkpoint(path.to_path_buf(), e);
    let f = File::open(path).map_err(|e| err(e.into()))?;
    read_checkpoint(BufReader::new(f)).map_err(err)
}

const STATS: &str = "stats/";

/// One file: translator and critic parameters plus batch-norm running
/// statistics under `stats/`.
pub fn save_translators(path: &Path, set: &TranslatorSet) -> Result<()> {
    let mut all = set.translators.clone();
    all.merge_prefixed("", &set.critics);
    all.merge_prefixed(STATS, &set.stats);
    save_params(path, &all)
}

pub fn load_translators(path: &Path) -> Result<TranslatorSet> {
    let all = load_params(path)?;
    let pick = |prefixes: &[&str]| {
        let mut p = ParamSet::new();
        for pre in prefixes {
            p.merge_prefixed(pre, &all.extract_prefixed(pre));
        }
        p
    };
    let set = TranslatorSet {
        translators: pick(&["txy.", "tyx."]),
        critics: pick(&["fx.", "fy."]),
        stats: all.extract_prefixed(STATS),
    };
    for (what, p) in [("translators", &set.translators), ("critics", &set.critics), ("statistics", &set.stats)] {
        if p.is_empty() {
            return Err(PipelineError::Incomplete(path.to_path_buf(), what.into()));
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Family, SyntheticSpec};

    fn tiny() -> (NetConfig, TrainConfig) {
        let mut net = NetConfig::desk(2);
        net.points = 32;
        net.stages.iter_mut().zip([16, 8, 4, 2]).for_each(|(s, c)| {
            s.centers = c;
            s.group = 8;
        });
        net.sub_dim = 4;
        net.decoder_hidden = vec![32, 32];
        net.translator_hidden = vec![16; 4];
        net.critic_hidden = vec![16, 8, 4];
        net.upsample_m = 2;
        let mut tc = TrainConfig::desk();
        tc.ae_epochs = 2;
        tc.ae_batch = 4;
        tc.tr_epochs = 2;
        tc.tr_batch = 4;
        tc.up_epochs = 1;
        tc.up_batch = 4;
        tc.up_subset = 16;
        (net, tc)
    }

    fn clouds(f: Family, n: usize, seed: u64, points: usize) -> Vec<PointCloud> {
        SyntheticSpec::new(f, n, seed)
            .draw()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, s)| s.sample(points, &mut stream(seed, 1 + i as u64)))
            .collect()
    }

    #[test]
    fn three_phases_checkpoint_and_translate() {
        let (net, tc) = tiny();
        let xs = clouds(Family::Crosses, 6, 1, 32);
        let ys = clouds(Family::Squares, 6, 2, 32);
        let mut r = TrainReport::default();
        let mut pool = xs.clone();
        pool.extend(ys.clone());
        let ae = run_autoencoder(&net, &tc, pool, 5, &mut r).unwrap();
        let set = run_translators(&net, &tc, &ae, &xs, &ys, 5, &mut r).unwrap();
        let dense = clouds(Family::Crosses, 6, 1, 64);
        let up = run_upsampler(&net, &tc, &ae, xs.clone(), &dense, 5, &mut r).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_params(&dir.path().join("ae.lsxc"), &ae).unwrap();
        save_translators(&dir.path().join("tr.lsxc"), &set).unwrap();
        save_params(&dir.path().join("up.lsxc"), &up).unwrap();
        let model = Model {
            net: net.clone(),
            ae: load_params(&dir.path().join("ae.lsxc")).unwrap(),
            translators: Some(load_translators(&dir.path().join("tr.lsxc")).unwrap()),
            upsampler: Some(load_params(&dir.path().join("up.lsxc")).unwrap()),
        };
        assert_eq!(model.translators.as_ref(), Some(&set));
        let out = model.translate(Direction::XtoY, &xs[..3], false).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|c| c.len() == 32));
        let dense_out = model.translate(Direction::YtoX, &ys[..2], true).unwrap();
        assert!(dense_out.iter().all(|c| c.len() == 64));
        let again = model.translate(Direction::XtoY, &xs[..3], false).unwrap();
        assert_eq!(out, again);
    }
}
