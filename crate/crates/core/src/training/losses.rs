//! Loss terms as graph builders. Reductions: mean over the batch, L1 norms
//! summed over code dimensions.

use crate::autodiff::{BoundParams, Graph, NodeId, Tensor};
use crate::kernels::PointCloud;
use crate::networks::{decode_graph, encode_graph, padded_subcode, EncoderPlan, NetConfig};
use crate::transport::{emd_loss_batch, AuctionConfig};

use super::Result;

#[derive(Clone, Debug)]
pub struct AeLoss {
    pub total: NodeId,
    pub rec_z: NodeId,
    /// Per sub-code reconstruction terms; empty when `lambda1 == 0`.
    pub rec_subs: Vec<NodeId>,
}

/// Reconstruction from `z` plus `lambda1` times the reconstructions from
/// each zero-padded sub-code, all decoded by the same decoder.
pub fn ae_loss(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &NetConfig,
    plans: &[&EncoderPlan],
    targets: &[PointCloud],
    lambda1: f64,
    auction: &AuctionConfig,
) -> Result<AeLoss> {
    let enc = encode_graph(g, p, cfg, plans)?;
    let mut codes = enc.z;
    let parts = if lambda1 > 0.0 { cfg.stages.len() } else { 0 };
    for i in 0..parts {
        let pz = padded_subcode(g, cfg, enc.z, i)?;
        codes = g.concat_rows(codes, pz)?;
    }
    let dec = decode_graph(g, p, cfg, codes)?;
    let rows = plans.len() * cfg.points;
    let segment = |g: &mut Graph, k: usize| -> Result<NodeId> {
        let pts = g.slice_rows(dec.points, k * rows, rows)?;
        Ok(emd_loss_batch(g, pts, targets, auction)?)
    };
    let rec_z = segment(g, 0)?;
    let mut rec_subs = Vec::with_capacity(parts);
    for i in 0..parts {
        rec_subs.push(segment(g, i + 1)?);
    }
    let mut total = rec_z;
    if let Some((&first, rest)) = rec_subs.split_first() {
        let mut s = first;
        for &r in rest {
            s = g.add(s, r)?;
        }
        let weighted = g.scale(s, lambda1)?;
        total = g.add(rec_z, weighted)?;
    }
    Ok(AeLoss { total, rec_z, rec_subs })
}

/// Mean over rows of `(‖∇F(x̂)‖ − 1)²` with `x̂ = u·real + (1 − u)·fake`,
/// one `u` per row. `critic` maps `[B × D]` inputs to `[B × 1]` scores, each
/// row depending on its own input only.
pub fn gradient_penalty<F>(g: &mut Graph, critic: &mut F, real: NodeId, fake: NodeId, u: &[f64]) -> Result<NodeId>
where
    F: FnMut(&mut Graph, NodeId) -> Result<NodeId>,
{
    let uw = g.constant(Tensor::vector(u.to_vec()));
    let vw = g.constant(Tensor::vector(u.iter().map(|v| 1.0 - v).collect()));
    let a = g.mul_col(real, uw)?;
    let b = g.mul_col(fake, vw)?;
    let interp = g.add(a, b)?;
    let scores = critic(g, interp)?;
    let total = g.sum_all(scores)?;
    let grad = g.input_gradient(total, interp)?;
    let norms = g.row_norm(grad)?;
    let dev = g.add_scalar(norms, -1.0)?;
    let sq = g.square(dev)?;
    Ok(g.mean_all(sq)?)
}

#[derive(Clone, Debug)]
pub struct WganTerms {
    /// `E[F(fake)] − E[F(real)] + λ2·GP`, minimized by the critic.
    pub critic: NodeId,
    /// `−E[F(fake)]`, minimized by the generator.
    pub generator: NodeId,
    pub real_mean: NodeId,
    pub fake_mean: NodeId,
    pub gp: NodeId,
}

/// `joint` scores the stacked `[real; fake]` batch in one call, so batch
/// statistics are shared between both halves. `per_row` must score each row
/// from its own input alone; it is used for the gradient penalty.
pub fn wgan_losses<J, F>(
    g: &mut Graph,
    joint: &mut J,
    per_row: &mut F,
    real: NodeId,
    fake: NodeId,
    lambda2: f64,
    u: &[f64],
) -> Result<WganTerms>
where
    J: FnMut(&mut Graph, NodeId) -> Result<NodeId>,
    F: FnMut(&mut Graph, NodeId) -> Result<NodeId>,
{
    let (nr, nf) = (g.shape(real)[0], g.shape(fake)[0]);
    let both = g.concat_rows(real, fake)?;
    let scores = joint(g, both)?;
    let fr = g.slice_rows(scores, 0, nr)?;
    let real_mean = g.mean_all(fr)?;
    let ff = g.slice_rows(scores, nr, nf)?;
    let fake_mean = g.mean_all(ff)?;
    let gp = gradient_penalty(g, per_row, real, fake, u)?;
    let diff = g.sub(fake_mean, real_mean)?;
    let wgp = g.scale(gp, lambda2)?;
    let critic_loss = g.add(diff, wgp)?;
    let generator = g.scale(fake_mean, -1.0)?;
    Ok(WganTerms { critic: critic_loss, generator, real_mean, fake_mean, gp })
}

/// Mean over rows of the L1 distance between `a` and `b`.
pub fn l1_rows_mean(g: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId> {
    let rows = g.shape(a)[0];
    let d = g.sub(a, b)?;
    let ad = g.abs(d)?;
    let s = g.sum_all(ad)?;
    Ok(g.scale(s, 1.0 / rows as f64)?)
}

/// Feature preservation: target-domain codes should pass through unchanged.
pub fn fp_loss(g: &mut Graph, target: NodeId, translated: NodeId) -> Result<NodeId> {
    l1_rows_mean(g, target, translated)
}

/// `‖T_yx(T_xy(x)) − x‖₁ + ‖T_xy(T_yx(y)) − y‖₁`, batch-averaged.
pub fn cycle_loss(g: &mut Graph, x: NodeId, x_back: NodeId, y: NodeId, y_back: NodeId) -> Result<NodeId> {
    let a = l1_rows_mean(g, x_back, x)?;
    let b = l1_rows_mean(g, y_back, y)?;
    Ok(g.add(a, b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamSet;
    use crate::kernels::normalize;
    use crate::networks::{discriminate_graph, init_critic, init_decoder, init_encoder};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn linear_critic(w: Vec<f64>) -> impl FnMut(&mut Graph, NodeId) -> Result<NodeId> {
        move |g: &mut Graph, x: NodeId| {
            let n = w.len();
            let wn = g.constant(Tensor::matrix(n, 1, w.clone()).unwrap());
            Ok(g.matmul(x, wn)?)
        }
    }

    #[test]
    fn unit_linear_critic_has_zero_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut critic = linear_critic(w.iter().map(|v| v / norm).collect());
        let mut g = Graph::new();
        let real = g.constant(random(&mut rng, 5, 6));
        let fake = g.constant(random(&mut rng, 5, 6));
        let gp = gradient_penalty(&mut g, &mut critic, real, fake, &[0.1, 0.3, 0.5, 0.7, 0.9]).unwrap();
        assert!(g.scalar_value(gp).unwrap().abs() < 1e-24);
    }

    #[test]
    fn constant_critic_has_unit_penalty() {
        let mut critic = |g: &mut Graph, x: NodeId| -> Result<NodeId> {
            let rows = g.shape(x)[0];
            Ok(g.constant(Tensor::filled(&[rows, 1], 3.0)))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new();
        let real = g.constant(random(&mut rng, 4, 3));
        let fake = g.constant(random(&mut rng, 4, 3));
        let gp = gradient_penalty(&mut g, &mut critic, real, fake, &[0.5; 4]).unwrap();
        assert_eq!(g.scalar_value(gp).unwrap(), 1.0);
    }

    fn small_net() -> NetConfig {
        let mut cfg = NetConfig::desk(2);
        cfg.sub_dim = 2;
        cfg.critic_hidden = vec![6, 5, 4];
        cfg
    }

    #[test]
    fn penalty_parameter_gradient_matches_finite_differences() {
        let cfg = small_net();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (params, stats) = init_critic(&cfg, "f", &mut rng);
        let real = random(&mut rng, 3, 8);
        let fake = random(&mut rng, 3, 8);
        let u = [0.2, 0.5, 0.8];
        let eval = |p: &ParamSet| -> f64 {
            let mut g = Graph::new();
            let bp = p.bind(&mut g, false);
            let r = g.constant(real.clone());
            let f = g.constant(fake.clone());
            let mut critic = |g: &mut Graph, x| Ok(discriminate_graph(g, &bp, &stats, &cfg, "f", x, false)?.0);
            let gp = gradient_penalty(&mut g, &mut critic, r, f, &u).unwrap();
            g.scalar_value(gp).unwrap()
        };
        let mut g = Graph::new();
        let bp = params.bind(&mut g, true);
        let r = g.constant(real.clone());
        let f = g.constant(fake.clone());
        let mut critic = |g: &mut Graph, x| Ok(discriminate_graph(g, &bp, &stats, &cfg, "f", x, false)?.0);
        let gp = gradient_penalty(&mut g, &mut critic, r, f, &u).unwrap();
        let grads = g.backward(gp).unwrap();
        let h = 1e-5;
        let (mut err, mut scale) = (0.0, 0.0);
        for (name, t) in params.iter() {
            for k in 0..t.len() {
                let mut up = params.clone();
                up.get_mut(name).unwrap().data_mut()[k] += h;
                let mut dn = params.clone();
                dn.get_mut(name).unwrap().data_mut()[k] -= h;
                let num = (eval(&up) - eval(&dn)) / (2.0 * h);
                let ana = grads[name].data()[k];
                err += (num - ana) * (num - ana);
                scale += num * num;
            }
        }
        assert!(err.sqrt() / scale.sqrt() < 1e-5, "{}", err.sqrt() / scale.sqrt());
    }

    #[test]
    fn identical_batches_cancel_without_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (mut joint, mut per_row) = (linear_critic(w.clone()), linear_critic(w));
        let mut g = Graph::new();
        let x = g.constant(random(&mut rng, 6, 4));
        let t = wgan_losses(&mut g, &mut joint, &mut per_row, x, x, 0.0, &[0.5; 6]).unwrap();
        assert_eq!(g.scalar_value(t.critic).unwrap(), 0.0);
    }

    #[test]
    fn critic_loss_decreases_on_separable_codes() {
        let cfg = small_net();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut params, mut stats) = init_critic(&cfg, "f", &mut rng);
        let mut state = crate::autodiff::AdamState::new(Default::default());
        let mk = |rng: &mut ChaCha8Rng, shift: f64| {
            let mut t = random(rng, 32, 8);
            t.data_mut().iter_mut().step_by(8).for_each(|v| *v += shift);
            t
        };
        let (mut losses, mut gaps) = (Vec::new(), Vec::new());
        for _ in 0..400 {
            let (real, fake) = (mk(&mut rng, 2.0), mk(&mut rng, -2.0));
            let u: Vec<f64> = (0..32).map(|_| rng.gen()).collect();
            let mut g = Graph::new();
            let bp = params.bind(&mut g, true);
            let r = g.constant(real);
            let f = g.constant(fake);
            let mut moments = Vec::new();
            let mut joint = |g: &mut Graph, x| {
                let (y, m) = discriminate_graph(g, &bp, &stats, &cfg, "f", x, true)?;
                moments = m;
                Ok(y)
            };
            let mut per_row = |g: &mut Graph, x| Ok(discriminate_graph(g, &bp, &stats, &cfg, "f", x, false)?.0);
            let t = wgan_losses(&mut g, &mut joint, &mut per_row, r, f, 10.0, &u).unwrap();
            losses.push(g.scalar_value(t.critic).unwrap());
            gaps.push(g.scalar_value(t.real_mean).unwrap() - g.scalar_value(t.fake_mean).unwrap());
            crate::networks::update_running_stats(&g, &moments, &mut stats, cfg.bn_momentum).unwrap();
            let grads = g.backward(t.critic).unwrap();
            crate::autodiff::adam_step(&mut params, &grads, &mut state, 1e-3).unwrap();
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (head, tail) = (mean(&losses[..20]), mean(&losses[380..]));
        assert!(tail < head, "{head} -> {tail}");
        assert!(mean(&gaps[380..]) > mean(&gaps[..20]) + 0.5);
    }

    #[test]
    fn fp_and_cycle_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = Graph::new();
        let y = g.constant(random(&mut rng, 4, 256));
        let fp0 = fp_loss(&mut g, y, y).unwrap();
        assert_eq!(g.scalar_value(fp0).unwrap(), 0.0);
        let shifted = g.add_scalar(y, 1.0).unwrap();
        let fp1 = fp_loss(&mut g, y, shifted).unwrap();
        assert!((g.scalar_value(fp1).unwrap() - 256.0).abs() < 1e-9);
        let x = g.constant(random(&mut rng, 3, 256));
        let c0 = cycle_loss(&mut g, x, x, y, y).unwrap();
        assert_eq!(g.scalar_value(c0).unwrap(), 0.0);
        let xs = g.add_scalar(x, 0.25).unwrap();
        let back = g.add_scalar(xs, -0.25).unwrap();
        let c1 = cycle_loss(&mut g, x, back, y, y).unwrap();
        assert!(g.scalar_value(c1).unwrap() < 1e-12);
    }

    #[test]
    fn ae_loss_zero_weight_drops_sub_terms_and_perfect_reconstruction_is_zero() {
        let mut cfg = NetConfig::desk(2);
        cfg.points = 16;
        cfg.stages.iter_mut().zip([8, 4, 2, 1]).for_each(|(s, c)| s.centers = c);
        cfg.stages.iter_mut().for_each(|s| s.group = 4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cloud = normalize(&crate::kernels::PointCloud::new(2, (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
            .unwrap();
        let plan = EncoderPlan::new(&cfg, &cloud, 0).unwrap();
        let mut params = init_encoder(&cfg, &mut rng);
        params.merge_prefixed("", &init_decoder(&cfg, &mut rng));
        let auction = AuctionConfig::default();
        let mut g = Graph::new();
        let bp = params.bind(&mut g, true);
        let l0 = ae_loss(&mut g, &bp, &cfg, &[&plan], std::slice::from_ref(&cloud), 0.0, &auction).unwrap();
        assert!(l0.rec_subs.is_empty());
        assert_eq!(g.scalar_value(l0.total).unwrap(), g.scalar_value(l0.rec_z).unwrap());
        let l1 = ae_loss(&mut g, &bp, &cfg, &[&plan], std::slice::from_ref(&cloud), 0.1, &auction).unwrap();
        let expected = g.scalar_value(l1.rec_z).unwrap()
            + 0.1 * l1.rec_subs.iter().map(|&n| g.scalar_value(n).unwrap()).sum::<f64>();
        assert!((g.scalar_value(l1.total).unwrap() - expected).abs() < 1e-12);
        // Zero weights and the cloud as the last bias decode every code perfectly.
        for (k, v) in params.iter_mut() {
            if k.starts_with("dec.") {
                v.data_mut().iter_mut().for_each(|x| *x = 0.0);
            }
        }
        *params.get_mut("dec.l3.b").unwrap() = Tensor::vector(cloud.coords().to_vec());
        let mut g = Graph::new();
        let bp = params.bind(&mut g, true);
        let l = ae_loss(&mut g, &bp, &cfg, &[&plan], std::slice::from_ref(&cloud), 0.1, &auction).unwrap();
        assert_eq!(g.scalar_value(l.total).unwrap(), 0.0);
    }
}
