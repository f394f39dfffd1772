use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::losses::ae_loss;
use super::{check_finite, EpochMeans, Result, TrainConfig, TrainError, TrainReport};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph, ParamSet};
use crate::kernels::PointCloud;
use crate::networks::{init_decoder, init_encoder, EncoderPlan, NetConfig};

/// Training clouds with their precomputed sampling plans.
#[derive(Clone, Debug)]
pub struct AeData {
    pub clouds: Vec<PointCloud>,
    pub plans: Vec<EncoderPlan>,
}

impl AeData {
    pub fn new(net: &NetConfig, clouds: Vec<PointCloud>) -> Result<Self> {
        let plans = clouds.iter().map(|c| EncoderPlan::new(net, c, net.fps_seed)).collect::<std::result::Result<_, _>>()?;
        Ok(AeData { clouds, plans })
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }
}

/// Trains encoder and decoder jointly on the pooled clouds of both domains.
/// Returns one parameter set holding `enc.*` and `dec.*`.
pub fn train_autoencoder(
    net: &NetConfig,
    tc: &TrainConfig,
    data: &AeData,
    rng: &mut ChaCha8Rng,
    report: &mut TrainReport,
) -> Result<ParamSet> {
    net.validate()?;
    tc.validate()?;
    if data.is_empty() {
        return Err(TrainError::Invalid("no training clouds".into()));
    }
    let start = Instant::now();
    let mut params = init_encoder(net, rng);
    params.merge_prefixed("", &init_decoder(net, rng));
    let mut adam = AdamState::new(AdamConfig::default());
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=tc.ae_epochs {
        let lr = tc.ae_lr.rate(epoch);
        order.shuffle(rng);
        let mut means = EpochMeans::default();
        for (step, batch) in order.chunks(tc.ae_batch).enumerate() {
            let plans: Vec<&EncoderPlan> = batch.iter().map(|&i| &data.plans[i]).collect();
            let targets: Vec<PointCloud> = batch.iter().map(|&i| data.clouds[i].clone()).collect();
            let mut g = Graph::new();
            let bp = params.bind(&mut g, true);
            let loss = ae_loss(&mut g, &bp, net, &plans, &targets, tc.lambda1, &tc.auction)?;
            let w = batch.len() as f64;
            means.add("loss", check_finite(g.scalar_value(loss.total)?, "ae", "loss", epoch, step)?, w);
            means.add("rec_z", g.scalar_value(loss.rec_z)?, w);
            if !loss.rec_subs.is_empty() {
                let subs: f64 = loss.rec_subs.iter().map(|&n| g.scalar_value(n)).sum::<std::result::Result<f64, _>>()?;
                means.add("rec_sub_mean", subs / loss.rec_subs.len() as f64, w);
            }
            let grads = g.backward(loss.total)?;
            adam_step(&mut params, &grads, &mut adam, lr)?;
        }
        if !params.is_finite() {
            return Err(TrainError::NonFinite { phase: "ae", series: "parameters".into(), epoch, step: 0 });
        }
        means.flush(report, epoch);
        report.record("lr", epoch, lr);
        log::info!("ae epoch {epoch}/{}: loss {:.5}", tc.ae_epochs, means.get("loss"));
    }
    report.wall_clock += start.elapsed().as_secs_f64();
    Ok(params)
}
