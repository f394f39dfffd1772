use std::sync::Arc;

use rand::Rng;

use super::{LatentCode, NetConfig, NetError, Result};
use crate::autodiff::{BoundParams, Graph, NodeId, ParamSet, Tensor};
use crate::kernels::{ball_query, farthest_point_sample, PointCloud};

/// Sampling and grouping for one cloud, fixed ahead of training so every
/// epoch sees the same neighborhoods.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderPlan {
    /// Level 0 is the input; level `s + 1` holds the centers of stage `s`.
    pub levels: Vec<PointCloud>,
    /// Per stage: center indices into the previous level.
    pub centers: Vec<Vec<usize>>,
    /// Per stage: `centers × group` member indices into the previous level.
    pub members: Vec<Vec<usize>>,
}

impl EncoderPlan {
    pub fn new(cfg: &NetConfig, cloud: &PointCloud, seed: u64) -> Result<Self> {
        if cloud.dim() != cfg.dim {
            return Err(NetError::Dim { expected: cfg.dim, got: cloud.dim() });
        }
        if cloud.len() != cfg.points {
            return Err(NetError::PointCount { expected: cfg.points, got: cloud.len() });
        }
        let mut levels = vec![cloud.clone()];
        let mut centers = Vec::new();
        let mut members = Vec::new();
        for (s, st) in cfg.stages.iter().enumerate() {
            let level = &levels[s];
            let idx = farthest_point_sample(level, st.centers, seed.wrapping_add(s as u64))?;
            let groups = ball_query(level, &idx, st.radius, st.group)?;
            let next = level.select(&idx);
            centers.push(idx);
            members.push(groups.members.into_iter().flatten().collect());
            levels.push(next);
        }
        Ok(EncoderPlan { levels, centers, members })
    }

    /// Same plan for the input reordered so that new point `k` is old point
    /// `order[k]`.
    pub fn reorder_input(&self, order: &[usize]) -> EncoderPlan {
        let mut inverse = vec![0; order.len()];
        for (k, &old) in order.iter().enumerate() {
            inverse[old] = k;
        }
        let mut out = self.clone();
        out.levels[0] = self.levels[0].select(order);
        out.centers[0] = self.centers[0].iter().map(|&i| inverse[i]).collect();
        out.members[0] = self.members[0].iter().map(|&i| inverse[i]).collect();
        out
    }
}

pub fn init_encoder<R: Rng>(cfg: &NetConfig, rng: &mut R) -> ParamSet {
    let mut p = ParamSet::new();
    let mut prev_width = 0;
    for (s, st) in cfg.stages.iter().enumerate() {
        let mut w = cfg.dim + prev_width;
        for (l, &h) in st.mlp.iter().enumerate() {
            p.add_affine(&format!("enc.s{s}.mlp{l}"), w, h, rng);
            w = h;
        }
        prev_width = w;
        w += cfg.dim;
        for (l, &h) in cfg.global_hidden.iter().chain([&cfg.sub_dim]).enumerate() {
            p.add_affine(&format!("enc.s{s}.glob{l}"), w, h, rng);
            w = h;
        }
    }
    p
}

/// Graph nodes of an encoding: `z` is `[B × code]`, `subs[s]` is `[B × sub]`.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub z: NodeId,
    pub subs: Vec<NodeId>,
}

fn dense(g: &mut Graph, p: &BoundParams, name: &str, x: NodeId, relu: bool) -> Result<NodeId> {
    let y = g.affine(x, p.node(&format!("{name}.w"))?, p.node(&format!("{name}.b"))?)?;
    Ok(if relu { g.relu(y)? } else { y })
}

pub fn encode_graph(g: &mut Graph, p: &BoundParams, cfg: &NetConfig, plans: &[&EncoderPlan]) -> Result<Encoded> {
    let b = plans.len();
    let d = cfg.dim;
    let code_dim = cfg.code_dim();
    let mut feats: Option<NodeId> = None;
    let mut z: Option<NodeId> = None;
    let mut subs = Vec::new();
    for (s, st) in cfg.stages.iter().enumerate() {
        let (c, gs) = (st.centers, st.group);
        let n_prev = cfg.level_size(s);
        let mut rel = Vec::with_capacity(b * c * gs * d);
        let mut idx = Vec::with_capacity(b * c * gs);
        let mut abs = Vec::with_capacity(b * c * d);
        for (bi, plan) in plans.iter().enumerate() {
            let level = &plan.levels[s];
            for ci in 0..c {
                let center = level.point(plan.centers[s][ci]);
                abs.extend_from_slice(center);
                for &m in &plan.members[s][ci * gs..(ci + 1) * gs] {
                    rel.extend(level.point(m).iter().zip(center).map(|(a, o)| (a - o) / st.radius));
                    idx.push(bi * n_prev + m);
                }
            }
        }
        let rel = g.constant(Tensor::matrix(b * c * gs, d, rel)?);
        let mut x = match feats {
            None => rel,
            Some(f) => {
                let gathered = g.gather_rows(f, Arc::from(idx))?;
                g.concat_cols(rel, gathered)?
            }
        };
        for l in 0..st.mlp.len() {
            x = dense(g, p, &format!("enc.s{s}.mlp{l}"), x, true)?;
        }
        let pooled = g.segment_max(x, gs)?;
        let abs = g.constant(Tensor::matrix(b * c, d, abs)?);
        let mut y = g.concat_cols(abs, pooled)?;
        let layers = cfg.global_hidden.len() + 1;
        for l in 0..layers {
            y = dense(g, p, &format!("enc.s{s}.glob{l}"), y, l + 1 < layers)?;
        }
        let sub = g.segment_max(y, c)?;
        let padded = g.pad_cols(sub, s * cfg.sub_dim, code_dim)?;
        z = Some(match z {
            None => padded,
            Some(acc) => g.add(acc, padded)?,
        });
        subs.push(sub);
        feats = Some(pooled);
    }
    Ok(Encoded { z: z.expect("at least one stage"), subs })
}

/// `z` with every slice but sub-code `i` zeroed, as a graph node.
pub fn padded_subcode(g: &mut Graph, cfg: &NetConfig, z: NodeId, i: usize) -> Result<NodeId> {
    let sub = g.slice_cols(z, i * cfg.sub_dim, cfg.sub_dim)?;
    Ok(g.pad_cols(sub, i * cfg.sub_dim, cfg.code_dim())?)
}

/// Inference-only encoding of a batch of planned clouds.
pub fn encode(params: &ParamSet, cfg: &NetConfig, plans: &[&EncoderPlan]) -> Result<Vec<LatentCode>> {
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let e = encode_graph(&mut g, &p, cfg, plans)?;
    Ok(LatentCode::from_rows(g.get(e.z)?, cfg.sub_dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::normalize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> NetConfig {
        let mut cfg = NetConfig::desk(2);
        cfg.points = 40;
        cfg.stages.iter_mut().zip([20, 10, 5, 3]).for_each(|(s, c)| s.centers = c);
        cfg.stages.iter_mut().for_each(|s| s.group = 6);
        cfg
    }

    fn cloud(seed: u64, n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        normalize(&PointCloud::new(2, (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()).unwrap()
    }

    #[test]
    fn layout_matches_sub_codes() {
        let cfg = tiny();
        let params = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let plans: Vec<EncoderPlan> = (0..3).map(|k| EncoderPlan::new(&cfg, &cloud(k, 40), 0).unwrap()).collect();
        let refs: Vec<&EncoderPlan> = plans.iter().collect();
        let mut g = Graph::new();
        let p = params.bind(&mut g, false);
        let e = encode_graph(&mut g, &p, &cfg, &refs).unwrap();
        let z = g.get(e.z).unwrap().clone();
        assert_eq!(z.shape(), &[3, 64]);
        for (s, &sub) in e.subs.iter().enumerate() {
            let sv = g.get(sub).unwrap();
            for r in 0..3 {
                assert_eq!(&z.row(r)[s * 16..(s + 1) * 16], sv.row(r));
            }
        }
        let pz = padded_subcode(&mut g, &cfg, e.z, 2).unwrap();
        let pv = g.get(pz).unwrap();
        let code = LatentCode { z: z.row(1).to_vec(), sub_dim: 16 };
        assert_eq!(pv.row(1), code.padded(2).as_slice());
        assert!(pv.row(1)[..32].iter().chain(&pv.row(1)[48..]).all(|&v| v == 0.0));
    }

    #[test]
    fn invariant_to_input_order_with_frozen_sampling() {
        let cfg = tiny();
        let params = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(2));
        let c = cloud(5, 40);
        let plan = EncoderPlan::new(&cfg, &c, 3).unwrap();
        let mut order: Vec<usize> = (0..40).collect();
        order.reverse();
        order.swap(3, 17);
        let moved = plan.reorder_input(&order);
        let a = encode(&params, &cfg, &[&plan]).unwrap();
        let b = encode(&params, &cfg, &[&moved]).unwrap();
        for (x, y) in a[0].z.iter().zip(&b[0].z) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn translated_copies_encode_identically_after_normalization() {
        let cfg = tiny();
        let params = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let c = cloud(6, 40);
        let shifted = PointCloud::new(2, c.coords().iter().enumerate().map(|(i, v)| v + [5.0, -2.0][i % 2]).collect()).unwrap();
        let p1 = EncoderPlan::new(&cfg, &normalize(&c).unwrap(), 0).unwrap();
        let p2 = EncoderPlan::new(&cfg, &normalize(&shifted).unwrap(), 0).unwrap();
        let a = encode(&params, &cfg, &[&p1]).unwrap();
        let b = encode(&params, &cfg, &[&p2]).unwrap();
        for (x, y) in a[0].z.iter().zip(&b[0].z) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn wrong_point_count_rejected() {
        let cfg = tiny();
        assert!(matches!(EncoderPlan::new(&cfg, &cloud(0, 39), 0), Err(NetError::PointCount { expected: 40, got: 39 })));
    }

    #[test]
    fn full_profile_shapes() {
        let cfg = NetConfig::full(3);
        let params = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(params.get("enc.s0.mlp0.w").unwrap().shape(), &[3, 64]);
        assert_eq!(params.get("enc.s1.mlp0.w").unwrap().shape(), &[131, 64]);
        assert_eq!(params.get("enc.s3.glob1.w").unwrap().shape(), &[128, 64]);
    }
}
