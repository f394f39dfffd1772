use std::sync::Arc;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand_chacha::ChaCha8Rng;

use super::{check_finite, AeData, EpochMeans, Result, TrainConfig, TrainError, TrainReport};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph, ParamSet, Tensor};
use crate::kernels::PointCloud;
use crate::networks::{decode_graph, encode_graph, init_upsampler, upsample_graph, EncoderPlan, NetConfig};
use crate::transport::emd_loss_batch;

/// Frozen decoder outputs for one cloud.
struct Frozen {
    penultimate: Vec<f64>,
    points: Vec<f64>,
}

fn freeze(net: &NetConfig, ae: &ParamSet, plans: &[&EncoderPlan]) -> Result<Vec<Frozen>> {
    let mut g = Graph::new();
    let p = ae.bind(&mut g, false);
    let e = encode_graph(&mut g, &p, net, plans)?;
    let d = decode_graph(&mut g, &p, net, e.z)?;
    let pen = g.get(d.penultimate)?;
    let pts = g.get(d.points)?;
    let per = net.points * net.dim;
    Ok((0..plans.len())
        .map(|i| Frozen { penultimate: pen.row(i).to_vec(), points: pts.data()[i * per..(i + 1) * per].to_vec() })
        .collect())
}

/// Trains the displacement head on top of the frozen decoder. Each step
/// compares random `up_subset`-point subsets of the `m·n` output and of the
/// dense ground truth.
pub fn train_upsampler(
    net: &NetConfig,
    tc: &TrainConfig,
    ae: &ParamSet,
    data: &AeData,
    dense: &[PointCloud],
    rng: &mut ChaCha8Rng,
    report: &mut TrainReport,
) -> Result<ParamSet> {
    net.validate()?;
    tc.validate()?;
    if data.is_empty() || dense.len() != data.len() {
        return Err(TrainError::Invalid(format!("{} clouds but {} dense ground truths", data.len(), dense.len())));
    }
    let out_points = net.points * net.upsample_m;
    let k = tc.up_subset;
    if k > out_points || dense.iter().any(|d| d.len() < k || d.dim() != net.dim) {
        return Err(TrainError::Invalid(format!("subset {k} exceeds output ({out_points}) or dense ground truth size")));
    }
    let start = Instant::now();
    let mut frozen = Vec::with_capacity(data.len());
    for chunk in data.plans.chunks(64) {
        let refs: Vec<&EncoderPlan> = chunk.iter().collect();
        frozen.extend(freeze(net, ae, &refs)?);
    }
    let mut params = init_upsampler(net, rng);
    let mut adam = AdamState::new(AdamConfig::default());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let hidden = frozen[0].penultimate.len();
    for epoch in 1..=tc.up_epochs {
        let lr = tc.up_lr.rate(epoch);
        order.shuffle(rng);
        let mut means = EpochMeans::default();
        for (step, batch) in order.chunks(tc.up_batch).enumerate() {
            let b = batch.len();
            let pen: Vec<f64> = batch.iter().flat_map(|&i| frozen[i].penultimate.iter().copied()).collect();
            let base: Vec<f64> = batch.iter().flat_map(|&i| frozen[i].points.iter().copied()).collect();
            let mut pick = Vec::with_capacity(b * k);
            let mut targets = Vec::with_capacity(b);
            for (slot, &i) in batch.iter().enumerate() {
                let mut out_idx = index::sample(rng, out_points, k).into_vec();
                out_idx.sort_unstable();
                pick.extend(out_idx.iter().map(|j| slot * out_points + j));
                let mut gt_idx = index::sample(rng, dense[i].len(), k).into_vec();
                gt_idx.sort_unstable();
                targets.push(dense[i].select(&gt_idx));
            }
            let mut g = Graph::new();
            let p = params.bind(&mut g, true);
            let pn = g.constant(Tensor::matrix(b, hidden, pen)?);
            let bn = g.constant(Tensor::matrix(b * net.points, net.dim, base)?);
            let up = upsample_graph(&mut g, &p, net, pn, bn)?;
            let sub = g.gather_rows(up, Arc::from(pick))?;
            let loss = emd_loss_batch(&mut g, sub, &targets, &tc.auction)?;
            means.add("loss", check_finite(g.scalar_value(loss)?, "upsampler", "loss", epoch, step)?, b as f64);
            let grads = g.backward(loss)?;
            adam_step(&mut params, &grads, &mut adam, lr)?;
        }
        means.flush(report, epoch);
        report.record("lr", epoch, lr);
        log::info!("upsampler epoch {epoch}/{}: loss {:.5}", tc.up_epochs, means.get("loss"));
    }
    report.wall_clock += start.elapsed().as_secs_f64();
    Ok(params)
}
