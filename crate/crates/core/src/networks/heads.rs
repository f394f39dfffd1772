use std::sync::Arc;

use rand::Rng;

use super::{NetConfig, NetError, Result};
use crate::autodiff::{BoundParams, Graph, NodeId, ParamSet, Tensor};

fn dense(g: &mut Graph, p: &BoundParams, name: &str, x: NodeId) -> Result<NodeId> {
    Ok(g.affine(x, p.node(&format!("{name}.w"))?, p.node(&format!("{name}.b"))?)?)
}

fn check_width(g: &Graph, x: NodeId, expected: usize) -> Result<()> {
    let shape = g.shape(x);
    let got = if shape.len() == 2 { shape[1] } else { 0 };
    if got != expected {
        return Err(NetError::Width { expected, got });
    }
    Ok(())
}

fn add_bn(p: &mut ParamSet, stats: &mut ParamSet, name: &str, width: usize) {
    p.insert(format!("{name}.gamma"), Tensor::filled(&[width], 1.0));
    p.insert(format!("{name}.beta"), Tensor::zeros(&[width]));
    stats.insert(format!("{name}.mean"), Tensor::zeros(&[width]));
    stats.insert(format!("{name}.var"), Tensor::filled(&[width], 1.0));
}

pub fn init_decoder<R: Rng>(cfg: &NetConfig, rng: &mut R) -> ParamSet {
    let mut p = ParamSet::new();
    let mut w = cfg.code_dim();
    for (l, &h) in cfg.decoder_hidden.iter().chain([&(cfg.points * cfg.dim)]).enumerate() {
        p.add_affine(&format!("dec.l{l}"), w, h, rng);
        w = h;
    }
    p
}

/// Decoder nodes: `points` is `[R·n × d]`, `penultimate` is the last hidden
/// activation `[R × h]`.
#[derive(Clone, Copy, Debug)]
pub struct Decoded {
    pub points: NodeId,
    pub penultimate: NodeId,
}

pub fn decode_graph(g: &mut Graph, p: &BoundParams, cfg: &NetConfig, codes: NodeId) -> Result<Decoded> {
    check_width(g, codes, cfg.code_dim())?;
    let rows = g.shape(codes)[0];
    let mut x = codes;
    for l in 0..cfg.decoder_hidden.len() {
        let y = dense(g, p, &format!("dec.l{l}"), x)?;
        x = g.relu(y)?;
    }
    let penultimate = x;
    let out = dense(g, p, &format!("dec.l{}", cfg.decoder_hidden.len()), x)?;
    let points = g.reshape(out, &[rows * cfg.points, cfg.dim])?;
    Ok(Decoded { points, penultimate })
}

/// Inference-only decoding of `[R × code]` codes into `[R·n × d]` points.
pub fn decode(params: &ParamSet, cfg: &NetConfig, codes: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let c = g.constant(codes.clone());
    let d = decode_graph(&mut g, &p, cfg, c)?;
    Ok(g.get(d.points)?.clone())
}

/// Translator `{prefix}`: trainable parameters and running batch-norm statistics.
pub fn init_translator<R: Rng>(cfg: &NetConfig, prefix: &str, rng: &mut R) -> (ParamSet, ParamSet) {
    let (mut p, mut s) = (ParamSet::new(), ParamSet::new());
    let mut w = cfg.code_dim();
    for (l, &h) in cfg.translator_hidden.iter().enumerate() {
        p.add_affine(&format!("{prefix}.l{l}"), w, h, rng);
        add_bn(&mut p, &mut s, &format!("{prefix}.bn{l}"), h);
        w = h;
    }
    p.add_affine(&format!("{prefix}.l{}", cfg.translator_hidden.len()), w, cfg.code_dim(), rng);
    (p, s)
}

/// Critic `{prefix}`: trainable parameters and running batch-norm statistics.
pub fn init_critic<R: Rng>(cfg: &NetConfig, prefix: &str, rng: &mut R) -> (ParamSet, ParamSet) {
    let (mut p, mut s) = (ParamSet::new(), ParamSet::new());
    let mut w = cfg.code_dim();
    for (l, &h) in cfg.critic_hidden.iter().enumerate() {
        p.add_affine(&format!("{prefix}.l{l}"), w, h, rng);
        add_bn(&mut p, &mut s, &format!("{prefix}.bn{l}"), h);
        w = h;
    }
    p.add_affine(&format!("{prefix}.l{}", cfg.critic_hidden.len()), w, 1, rng);
    (p, s)
}

/// Batch statistics of one batch-norm layer, for updating running stats.
#[derive(Clone, Debug)]
pub struct BatchMoments {
    pub name: String,
    pub mean: NodeId,
    pub var: NodeId,
    pub rows: usize,
}

fn bn_train(g: &mut Graph, p: &BoundParams, name: &str, x: NodeId, eps: f64) -> Result<(NodeId, BatchMoments)> {
    let rows = g.shape(x)[0];
    let s = g.sum_rows(x)?;
    let mean = g.scale(s, 1.0 / rows as f64)?;
    let neg = g.scale(mean, -1.0)?;
    let xc = g.add_row(x, neg)?;
    let sq = g.square(xc)?;
    let ss = g.sum_rows(sq)?;
    let var = g.scale(ss, 1.0 / rows as f64)?;
    let ve = g.add_scalar(var, eps)?;
    let sd = g.sqrt(ve)?;
    let ones = g.constant(Tensor::filled(g.shape(sd), 1.0));
    let inv = g.div(ones, sd)?;
    let gamma = p.node(&format!("{name}.gamma"))?;
    let k = g.mul(inv, gamma)?;
    let y = g.mul_row(xc, k)?;
    let y = g.add_row(y, p.node(&format!("{name}.beta"))?)?;
    Ok((y, BatchMoments { name: name.to_string(), mean, var, rows }))
}

fn bn_inference(g: &mut Graph, p: &BoundParams, stats: &ParamSet, name: &str, x: NodeId, eps: f64) -> Result<NodeId> {
    let mean = stats.get(&format!("{name}.mean"))?;
    let inv: Vec<f64> = stats.get(&format!("{name}.var"))?.data().iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let inv = g.constant(Tensor::vector(inv));
    let k = g.mul(p.node(&format!("{name}.gamma"))?, inv)?;
    let mean = g.constant(mean.clone());
    let mk = g.mul(mean, k)?;
    let shift = g.sub(p.node(&format!("{name}.beta"))?, mk)?;
    let y = g.mul_row(x, k)?;
    Ok(g.add_row(y, shift)?)
}

/// Translator graph. In training mode batch-norm normalizes with the batch
/// statistics and reports them; otherwise it uses the running statistics.
pub fn translate_graph(
    g: &mut Graph,
    p: &BoundParams,
    stats: &ParamSet,
    cfg: &NetConfig,
    prefix: &str,
    x: NodeId,
    train: bool,
) -> Result<(NodeId, Vec<BatchMoments>)> {
    check_width(g, x, cfg.code_dim())?;
    let mut moments = Vec::new();
    let mut h = x;
    for l in 0..cfg.translator_hidden.len() {
        let a = dense(g, p, &format!("{prefix}.l{l}"), h)?;
        let bn = format!("{prefix}.bn{l}");
        let n = if train {
            let (y, m) = bn_train(g, p, &bn, a, cfg.bn_eps)?;
            moments.push(m);
            y
        } else {
            bn_inference(g, p, stats, &bn, a, cfg.bn_eps)?
        };
        h = g.relu(n)?;
    }
    let out = dense(g, p, &format!("{prefix}.l{}", cfg.translator_hidden.len()), h)?;
    Ok((out, moments))
}

/// Exponential moving update of running stats from evaluated batch moments.
/// The running variance uses the unbiased batch estimate.
pub fn update_running_stats(g: &Graph, moments: &[BatchMoments], stats: &mut ParamSet, momentum: f64) -> Result<()> {
    for m in moments {
        let bm = g.get(m.mean)?.data().to_vec();
        let correction = if m.rows > 1 { m.rows as f64 / (m.rows - 1) as f64 } else { 1.0 };
        let bv: Vec<f64> = g.get(m.var)?.data().iter().map(|v| v * correction).collect();
        blend(stats.get_mut(&format!("{}.mean", m.name))?, &bm, momentum);
        blend(stats.get_mut(&format!("{}.var", m.name))?, &bv, momentum);
    }
    Ok(())
}

fn blend(running: &mut Tensor, batch: &[f64], momentum: f64) {
    for (r, b) in running.data_mut().iter_mut().zip(batch) {
        *r = (1.0 - momentum) * *r + momentum * b;
    }
}

/// Inference translation of `[B × code]` codes.
pub fn translate(params: &ParamSet, stats: &ParamSet, cfg: &NetConfig, prefix: &str, codes: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let x = g.constant(codes.clone());
    let (y, _) = translate_graph(&mut g, &p, stats, cfg, prefix, x, false)?;
    Ok(g.get(y)?.clone())
}

/// Critic scores `[B × 1]`. In training mode batch-norm uses the statistics
/// of the given batch and reports them; otherwise the running statistics,
/// which makes each row's score depend on that row alone.
pub fn discriminate_graph(
    g: &mut Graph,
    p: &BoundParams,
    stats: &ParamSet,
    cfg: &NetConfig,
    prefix: &str,
    x: NodeId,
    train: bool,
) -> Result<(NodeId, Vec<BatchMoments>)> {
    check_width(g, x, cfg.code_dim())?;
    let mut moments = Vec::new();
    let mut h = x;
    for l in 0..cfg.critic_hidden.len() {
        let a = dense(g, p, &format!("{prefix}.l{l}"), h)?;
        let bn = format!("{prefix}.bn{l}");
        let n = if train {
            let (y, m) = bn_train(g, p, &bn, a, cfg.bn_eps)?;
            moments.push(m);
            y
        } else {
            bn_inference(g, p, stats, &bn, a, cfg.bn_eps)?
        };
        h = g.relu(n)?;
    }
    let out = dense(g, p, &format!("{prefix}.l{}", cfg.critic_hidden.len()), h)?;
    Ok((out, moments))
}

/// Inference-form critic scores.
pub fn discriminate(params: &ParamSet, stats: &ParamSet, cfg: &NetConfig, prefix: &str, codes: &Tensor) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let x = g.constant(codes.clone());
    let (y, _) = discriminate_graph(&mut g, &p, stats, cfg, prefix, x, false)?;
    Ok(g.get(y)?.data().to_vec())
}

pub fn init_upsampler<R: Rng>(cfg: &NetConfig, rng: &mut R) -> ParamSet {
    let mut p = ParamSet::new();
    let h = *cfg.decoder_hidden.last().expect("validated non-empty");
    p.add_affine("up.l0", h, cfg.points * cfg.upsample_m * cfg.dim, rng);
    // Start from small displacements so early training refines, not scatters.
    p.get_mut("up.l0.w").expect("just added").data_mut().iter_mut().for_each(|w| *w *= 0.1);
    p
}

/// Each base point emits `m` copies displaced by `0.1·sigmoid(·) − 0.05`
/// per coordinate. Output rows are point-major: copies of a point are adjacent.
pub fn upsample_graph(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &NetConfig,
    penultimate: NodeId,
    base: NodeId,
) -> Result<NodeId> {
    let rows = g.shape(penultimate)[0];
    let (n, m, d) = (cfg.points, cfg.upsample_m, cfg.dim);
    if g.shape(base) != [rows * n, d] {
        return Err(NetError::Width { expected: rows * n, got: g.shape(base)[0] });
    }
    let a = dense(g, p, "up.l0", penultimate)?;
    let s = g.sigmoid(a)?;
    let s = g.scale(s, 0.1)?;
    let disp = g.add_scalar(s, -0.05)?;
    let disp = g.reshape(disp, &[rows * n * m, d])?;
    let idx: Arc<[usize]> = (0..rows * n * m).map(|r| r / m).collect();
    let repeated = g.gather_rows(base, idx)?;
    Ok(g.add(repeated, disp)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> NetConfig {
        let mut cfg = NetConfig::desk(2);
        cfg.points = 6;
        cfg.sub_dim = 3;
        cfg.decoder_hidden = vec![8, 8, 10];
        cfg.translator_hidden = vec![9; 4];
        cfg.critic_hidden = vec![7, 6, 5];
        cfg.upsample_m = 3;
        cfg
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn zero_weights(p: &mut ParamSet) {
        for (k, v) in p.iter_mut() {
            if k.ends_with(".w") {
                v.data_mut().iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }

    #[test]
    fn decoder_zero_weights_emit_bias() {
        let cfg = small();
        let mut p = init_decoder(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        zero_weights(&mut p);
        let bias: Vec<f64> = (0..12).map(|i| i as f64 * 0.5).collect();
        *p.get_mut("dec.l3.b").unwrap() = Tensor::vector(bias.clone());
        let out = decode(&p, &cfg, &random(&mut ChaCha8Rng::seed_from_u64(1), 2, 12)).unwrap();
        assert_eq!(out.shape(), &[12, 2]);
        assert_eq!(&out.data()[..12], bias.as_slice());
        assert_eq!(&out.data()[12..], bias.as_slice());
    }

    #[test]
    fn decoder_accepts_padded_codes_and_checks_width() {
        let cfg = small();
        let p = init_decoder(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        let mut code = vec![0.0; 12];
        code[3..6].copy_from_slice(&[0.4, -0.2, 0.9]);
        assert!(decode(&p, &cfg, &Tensor::matrix(1, 12, code).unwrap()).is_ok());
        assert!(matches!(decode(&p, &cfg, &Tensor::zeros(&[1, 11])), Err(NetError::Width { .. })));
        let cfg3 = NetConfig { dim: 3, ..small() };
        let p3 = init_decoder(&cfg3, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(decode(&p3, &cfg3, &Tensor::zeros(&[2, 12])).unwrap().shape(), &[12, 3]);
    }

    #[test]
    fn translator_shape_and_inference_determinism() {
        let cfg = small();
        let (p, s) = init_translator(&cfg, "txy", &mut ChaCha8Rng::seed_from_u64(0));
        let x = random(&mut ChaCha8Rng::seed_from_u64(1), 5, 12);
        let a = translate(&p, &s, &cfg, "txy", &x).unwrap();
        assert_eq!(a.shape(), &[5, 12]);
        assert_eq!(a, translate(&p, &s, &cfg, "txy", &x).unwrap());
        assert!(translate(&p, &s, &cfg, "txy", &Tensor::zeros(&[1, 5])).is_err());
    }

    #[test]
    fn translator_training_mode_normalizes_and_updates_stats() {
        let cfg = small();
        let (params, mut stats) = init_translator(&cfg, "t", &mut ChaCha8Rng::seed_from_u64(0));
        let x = random(&mut ChaCha8Rng::seed_from_u64(2), 16, 12);
        let mut g = Graph::new();
        let p = params.bind(&mut g, true);
        let xi = g.constant(x.clone());
        let (_, moments) = translate_graph(&mut g, &p, &stats, &cfg, "t", xi, true).unwrap();
        assert_eq!(moments.len(), 4);
        // Layer-0 pre-activations: mean and biased variance by hand.
        let w = params.get("t.l0.w").unwrap();
        let mut pre = vec![vec![0.0; 9]; 16];
        for r in 0..16 {
            for c in 0..9 {
                pre[r][c] = (0..12).map(|k| x.row(r)[k] * w.data()[k * 9 + c]).sum::<f64>();
            }
        }
        let mean: Vec<f64> = (0..9).map(|c| pre.iter().map(|r| r[c]).sum::<f64>() / 16.0).collect();
        let var: Vec<f64> = (0..9).map(|c| pre.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / 16.0).collect();
        let gm = g.get(moments[0].mean).unwrap().data().to_vec();
        let gv = g.get(moments[0].var).unwrap().data().to_vec();
        for c in 0..9 {
            assert!((gm[c] - mean[c]).abs() < 1e-12 && (gv[c] - var[c]).abs() < 1e-12);
        }
        update_running_stats(&g, &moments, &mut stats, 0.1).unwrap();
        let rm = stats.get("t.bn0.mean").unwrap().data();
        let rv = stats.get("t.bn0.var").unwrap().data();
        for c in 0..9 {
            assert!((rm[c] - 0.1 * mean[c]).abs() < 1e-12);
            assert!((rv[c] - (0.9 + 0.1 * var[c] * 16.0 / 15.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn critic_zero_weights_score_bias() {
        let cfg = small();
        let (mut p, s) = init_critic(&cfg, "fx", &mut ChaCha8Rng::seed_from_u64(0));
        zero_weights(&mut p);
        *p.get_mut("fx.l3.b").unwrap() = Tensor::vector(vec![0.7]);
        let scores = discriminate(&p, &s, &cfg, "fx", &random(&mut ChaCha8Rng::seed_from_u64(3), 4, 12)).unwrap();
        assert_eq!(scores, vec![0.7; 4]);
    }

    #[test]
    fn critic_input_gradient_matches_finite_differences() {
        let cfg = small();
        let (p, mut s) = init_critic(&cfg, "fx", &mut ChaCha8Rng::seed_from_u64(4));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (k, v) in s.iter_mut() {
            let lo = if k.ends_with(".var") { 0.5 } else { -0.5 };
            v.data_mut().iter_mut().for_each(|x| *x = lo + rng.gen::<f64>());
        }
        for _ in 0..20 {
            let x = random(&mut rng, 1, 12);
            let mut g = Graph::new();
            let bp = p.bind(&mut g, false);
            let xi = g.param("x", x.clone());
            let (y, _) = discriminate_graph(&mut g, &bp, &s, &cfg, "fx", xi, false).unwrap();
            let ys = g.sum_all(y).unwrap();
            let grad = g.backward(ys).unwrap()["x"].clone();
            let h = 1e-6;
            let mut num = Vec::new();
            for k in 0..12 {
                let mut up = x.clone();
                up.data_mut()[k] += h;
                let mut dn = x.clone();
                dn.data_mut()[k] -= h;
                let f = |t: &Tensor| discriminate(&p, &s, &cfg, "fx", t).unwrap()[0];
                num.push((f(&up) - f(&dn)) / (2.0 * h));
            }
            let err: f64 = num.iter().zip(grad.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = num.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            assert!(err / norm < 1e-5, "{}", err / norm);
        }
    }

    #[test]
    fn critic_scores_are_per_row() {
        let cfg = small();
        let (p, s) = init_critic(&cfg, "fy", &mut ChaCha8Rng::seed_from_u64(6));
        let x = random(&mut ChaCha8Rng::seed_from_u64(7), 6, 12);
        let batch = discriminate(&p, &s, &cfg, "fy", &x).unwrap();
        let single = discriminate(&p, &s, &cfg, "fy", &Tensor::matrix(1, 12, x.row(4).to_vec()).unwrap()).unwrap();
        assert_eq!(batch[4], single[0]);
    }

    fn run_upsample(cfg: &NetConfig, p: &ParamSet, pen: &Tensor, base: &Tensor) -> Tensor {
        let mut g = Graph::new();
        let bp = p.bind(&mut g, false);
        let pn = g.constant(pen.clone());
        let bn = g.constant(base.clone());
        let out = upsample_graph(&mut g, &bp, cfg, pn, bn).unwrap();
        g.get(out).unwrap().clone()
    }

    #[test]
    fn upsample_displacements_bounded() {
        let cfg = small();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut p = init_upsampler(&cfg, &mut rng);
        p.get_mut("up.l0.w").unwrap().data_mut().iter_mut().for_each(|w| *w *= 1000.0);
        let pen = random(&mut rng, 2, 10);
        let base = random(&mut rng, 12, 2);
        let out = run_upsample(&cfg, &p, &pen, &base);
        assert_eq!(out.shape(), &[36, 2]);
        for r in 0..36 {
            for k in 0..2 {
                assert!((out.row(r)[k] - base.row(r / 3)[k]).abs() <= 0.05 + 1e-15);
            }
        }
        zero_weights(&mut p);
        p.get_mut("up.l0.b").unwrap().data_mut().iter_mut().for_each(|b| *b = 0.0);
        let out = run_upsample(&cfg, &p, &pen, &base);
        for r in 0..36 {
            assert_eq!(out.row(r), base.row(r / 3));
        }
    }

    #[test]
    fn upsample_scale_of_dense_targets() {
        let mut cfg = small();
        cfg.points = 2048;
        cfg.upsample_m = 8;
        cfg.decoder_hidden = vec![4];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = init_upsampler(&cfg, &mut rng);
        let out = run_upsample(&cfg, &p, &random(&mut rng, 1, 4), &random(&mut rng, 2048, 2));
        assert_eq!(out.shape(), &[16384, 2]);
    }
}
