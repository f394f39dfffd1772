use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::losses::{cycle_loss, fp_loss, wgan_losses};
use super::{check_finite, EpochMeans, Result, TrainConfig, TrainError, TrainReport};
use crate::autodiff::{adam_step, AdamConfig, AdamState, BoundParams, Graph, NodeId, ParamSet, Tensor};
use crate::networks::{
    discriminate_graph, init_critic, init_translator, translate, translate_graph, update_running_stats, BatchMoments,
    NetConfig,
};

/// Translation direction between the two domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    XtoY,
    YtoX,
}

impl Direction {
    pub fn translator(self) -> &'static str {
        match self {
            Direction::XtoY => "txy",
            Direction::YtoX => "tyx",
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        match s {
            "x2y" => Some(Direction::XtoY),
            "y2x" => Some(Direction::YtoX),
            _ => None,
        }
    }
}

/// Both translators, both critics and their batch-norm running statistics.
/// Translators and critics work on standardized codes; the per-dimension
/// `codes.mean` and `codes.std` in `stats` map to and from them.
#[derive(Clone, Debug, PartialEq)]
pub struct TranslatorSet {
    /// `txy.*` and `tyx.*`.
    pub translators: ParamSet,
    /// `fx.*` judges domain X codes, `fy.*` domain Y codes.
    pub critics: ParamSet,
    pub stats: ParamSet,
}

const CODE_MEAN: &str = "codes.mean";
const CODE_STD: &str = "codes.std";

impl TranslatorSet {
    pub fn init(net: &NetConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut translators = ParamSet::new();
        let mut critics = ParamSet::new();
        let mut stats = ParamSet::new();
        for prefix in ["txy", "tyx"] {
            let (p, s) = init_translator(net, prefix, rng);
            translators.merge_prefixed("", &p);
            stats.merge_prefixed("", &s);
        }
        for prefix in ["fx", "fy"] {
            let (p, s) = init_critic(net, prefix, rng);
            critics.merge_prefixed("", &p);
            stats.merge_prefixed("", &s);
        }
        stats.insert(CODE_MEAN, Tensor::vector(vec![0.0; net.code_dim()]));
        stats.insert(CODE_STD, Tensor::vector(vec![1.0; net.code_dim()]));
        TranslatorSet { translators, critics, stats }
    }

    /// Sets the standardization from the pooled codes of both domains.
    fn fit_standardization(&mut self, zx: &Tensor, zy: &Tensor) -> Result<()> {
        let cols = zx.cols();
        let n = (zx.rows() + zy.rows()) as f64;
        let rows = || (0..zx.rows()).map(|r| zx.row(r)).chain((0..zy.rows()).map(|r| zy.row(r)));
        let mut mean = vec![0.0; cols];
        for row in rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; cols];
        for row in rows() {
            var.iter_mut().zip(row.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
        }
        // A dimension that never varies is passed through unscaled.
        let std = var.into_iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        *self.stats.get_mut(CODE_MEAN)? = Tensor::vector(mean);
        *self.stats.get_mut(CODE_STD)? = Tensor::vector(std);
        Ok(())
    }

    fn map_codes(&self, codes: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Result<Tensor> {
        let (mean, std) = (self.stats.get(CODE_MEAN)?.data(), self.stats.get(CODE_STD)?.data());
        if codes.rank() != 2 || codes.cols() != mean.len() {
            return Err(TrainError::Invalid(format!("codes of shape {:?}, expected [N × {}]", codes.shape(), mean.len())));
        }
        let data = codes.data().chunks(mean.len()).flat_map(|row| row.iter().zip(mean.iter().zip(std)).map(|(&v, (&m, &s))| f(v, m, s))).collect();
        Ok(Tensor::matrix(codes.rows(), codes.cols(), data)?)
    }

    pub fn standardize(&self, codes: &Tensor) -> Result<Tensor> {
        self.map_codes(codes, |v, m, s| (v - m) / s)
    }

    pub fn unstandardize(&self, codes: &Tensor) -> Result<Tensor> {
        self.map_codes(codes, |v, m, s| v * s + m)
    }

    /// Inference translation of `[B × code]` codes.
    pub fn translate(&self, net: &NetConfig, dir: Direction, codes: &Tensor) -> Result<Tensor> {
        let z = self.standardize(codes)?;
        self.unstandardize(&translate(&self.translators, &self.stats, net, dir.translator(), &z)?)
    }
}

/// Endless reshuffled pass over one domain's rows.
struct Stream {
    order: Vec<usize>,
    pos: usize,
}

impl Stream {
    fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Stream { order, pos: 0 }
    }

    fn next(&mut self, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn gather(t: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let cols = t.cols();
    let data = idx.iter().flat_map(|&i| t.row(i).iter().copied()).collect();
    Ok(Tensor::matrix(idx.len(), cols, data)?)
}

/// Values reported by one critic step.
#[derive(Clone, Copy, Debug)]
pub struct CriticStep {
    pub loss: f64,
    pub gp_x: f64,
    pub gp_y: f64,
}

/// Values reported by one generator step.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorStep {
    pub loss: f64,
    /// `E[F_Y(y)] − E[F_Y(T_xy(x))]`, and the same for domain X.
    pub w_y: f64,
    pub w_x: f64,
    pub fp_x: f64,
    pub fp_y: f64,
    pub cycle: f64,
}

/// Alternating optimizer state for the translator phase.
pub struct TranslatorTrainer<'a> {
    net: &'a NetConfig,
    tc: &'a TrainConfig,
    /// Standardized training codes.
    zx: Tensor,
    zy: Tensor,
    pub set: TranslatorSet,
    adam_t: AdamState,
    adam_c: AdamState,
    sx: Stream,
    sy: Stream,
}

impl<'a> TranslatorTrainer<'a> {
    pub fn new(net: &'a NetConfig, tc: &'a TrainConfig, zx: &'a Tensor, zy: &'a Tensor, rng: &mut ChaCha8Rng) -> Result<Self> {
        net.validate()?;
        tc.validate()?;
        for z in [zx, zy] {
            if z.rank() != 2 || z.rows() == 0 || z.cols() != net.code_dim() {
                return Err(TrainError::Invalid(format!("codes of shape {:?}, expected [N × {}]", z.shape(), net.code_dim())));
            }
        }
        let mut set = TranslatorSet::init(net, rng);
        set.fit_standardization(zx, zy)?;
        let (zx, zy) = (set.standardize(zx)?, set.standardize(zy)?);
        let sx = Stream::new(zx.rows(), rng);
        let sy = Stream::new(zy.rows(), rng);
        let adam = AdamState::new(AdamConfig::default());
        Ok(TranslatorTrainer { net, tc, zx, zy, set, adam_t: adam.clone(), adam_c: adam, sx, sy })
    }

    /// Generator iterations per epoch: one pass over the larger domain.
    pub fn steps_per_epoch(&self) -> usize {
        self.zx.rows().max(self.zy.rows()).div_ceil(self.tc.tr_batch)
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng) -> Result<(Tensor, Tensor)> {
        let b = self.tc.tr_batch;
        let xi = self.sx.next(b, rng);
        let yi = self.sy.next(b, rng);
        Ok((gather(&self.zx, &xi)?, gather(&self.zy, &yi)?))
    }

    /// `T(source)` and `T(target)` from one batch-norm batch `[source; target]`.
    fn translate_mixed(
        &self,
        g: &mut Graph,
        p: &BoundParams,
        prefix: &str,
        source: NodeId,
        target: NodeId,
    ) -> Result<(NodeId, NodeId, Vec<BatchMoments>)> {
        let b = g.shape(source)[0];
        let joint = g.concat_rows(source, target)?;
        let (out, moments) = translate_graph(g, p, &self.set.stats, self.net, prefix, joint, true)?;
        let translated = g.slice_rows(out, 0, b)?;
        let preserved = g.slice_rows(out, b, b)?;
        Ok((translated, preserved, moments))
    }

    /// One update of both critics with translators held fixed.
    pub fn critic_step(&mut self, rng: &mut ChaCha8Rng, lr: f64) -> Result<CriticStep> {
        let (x, y) = self.draw(rng)?;
        let b = x.rows();
        let (fake_y, fake_x) = {
            let mut g = Graph::new();
            let tp = self.set.translators.bind(&mut g, false);
            let (xn, yn) = (g.constant(x.clone()), g.constant(y.clone()));
            let (fy, _, _) = self.translate_mixed(&mut g, &tp, "txy", xn, yn)?;
            let (fx, _, _) = self.translate_mixed(&mut g, &tp, "tyx", yn, xn)?;
            (g.get(fy)?.clone(), g.get(fx)?.clone())
        };
        let uy: Vec<f64> = (0..b).map(|_| rng.gen()).collect();
        let ux: Vec<f64> = (0..b).map(|_| rng.gen()).collect();
        let mut g = Graph::new();
        let cp = self.set.critics.bind(&mut g, true);
        let (stats, net) = (&self.set.stats, self.net);
        let (ry, fy) = (g.constant(y), g.constant(fake_y));
        let (rx, fx) = (g.constant(x), g.constant(fake_x));
        let mut moments = Vec::new();
        let mut terms = Vec::new();
        for (prefix, real, fake, u) in [("fy", ry, fy, &uy), ("fx", rx, fx, &ux)] {
            let mut joint = |g: &mut Graph, n| {
                let (s, m) = discriminate_graph(g, &cp, stats, net, prefix, n, true)?;
                moments.extend(m);
                Ok(s)
            };
            let mut per_row = |g: &mut Graph, n| Ok(discriminate_graph(g, &cp, stats, net, prefix, n, false)?.0);
            terms.push(wgan_losses(&mut g, &mut joint, &mut per_row, real, fake, self.tc.lambda2, u)?);
        }
        let (ty, tx) = (&terms[0], &terms[1]);
        let loss = g.add(ty.critic, tx.critic)?;
        let out = CriticStep { loss: g.scalar_value(loss)?, gp_x: g.scalar_value(tx.gp)?, gp_y: g.scalar_value(ty.gp)? };
        update_running_stats(&g, &moments, &mut self.set.stats, self.net.bn_momentum)?;
        let grads = g.backward(loss)?;
        adam_step(&mut self.set.critics, &grads, &mut self.adam_c, lr)?;
        Ok(out)
    }

    /// One update of both translators with critics held fixed.
    pub fn generator_step(&mut self, rng: &mut ChaCha8Rng, lr: f64) -> Result<GeneratorStep> {
        let (x, y) = self.draw(rng)?;
        let mut g = Graph::new();
        let tp = self.set.translators.bind(&mut g, true);
        let cp = self.set.critics.bind(&mut g, false);
        let (xn, yn) = (g.constant(x), g.constant(y));
        let (fake_y, id_y, mut moments) = self.translate_mixed(&mut g, &tp, "txy", xn, yn)?;
        let (fake_x, id_x, m2) = self.translate_mixed(&mut g, &tp, "tyx", yn, xn)?;
        moments.extend(m2);
        let (stats, net) = (&self.set.stats, self.net);
        // Critics see real and translated codes as one batch-norm batch.
        let scores = |g: &mut Graph, prefix: &str, real: NodeId, fake: NodeId| -> Result<(NodeId, NodeId)> {
            let b = g.shape(real)[0];
            let both = g.concat_rows(real, fake)?;
            let (s, _) = discriminate_graph(g, &cp, stats, net, prefix, both, true)?;
            let (r, f) = (g.slice_rows(s, 0, b)?, g.slice_rows(s, b, b)?);
            Ok((g.mean_all(r)?, g.mean_all(f)?))
        };
        let (f_real_y, f_fake_y) = scores(&mut g, "fy", yn, fake_y)?;
        let (f_real_x, f_fake_x) = scores(&mut g, "fx", xn, fake_x)?;
        let fp_y = fp_loss(&mut g, yn, id_y)?;
        let fp_x = fp_loss(&mut g, xn, id_x)?;
        let (back_x, _) = translate_graph(&mut g, &tp, stats, net, "tyx", fake_y, true)?;
        let (back_y, _) = translate_graph(&mut g, &tp, stats, net, "txy", fake_x, true)?;
        let cyc = cycle_loss(&mut g, xn, back_x, yn, back_y)?;
        let adv = g.add(f_fake_y, f_fake_x)?;
        let adv = g.scale(adv, -1.0)?;
        let fp = g.add(fp_x, fp_y)?;
        let fp = g.scale(fp, self.tc.alpha)?;
        let cw = g.scale(cyc, self.tc.beta)?;
        let loss = g.add(adv, fp)?;
        let loss = g.add(loss, cw)?;
        let v = |n| g.scalar_value(n);
        let out = GeneratorStep {
            loss: v(loss)?,
            w_y: v(f_real_y)? - v(f_fake_y)?,
            w_x: v(f_real_x)? - v(f_fake_x)?,
            fp_x: v(fp_x)?,
            fp_y: v(fp_y)?,
            cycle: v(cyc)?,
        };
        update_running_stats(&g, &moments, &mut self.set.stats, self.net.bn_momentum)?;
        let grads = g.backward(loss)?;
        adam_step(&mut self.set.translators, &grads, &mut self.adam_t, lr)?;
        Ok(out)
    }
}

/// Alternating critic/generator optimization of both directions plus cycle
/// consistency. Encoder and decoder are not involved: inputs are frozen codes.
pub fn train_translators(
    net: &NetConfig,
    tc: &TrainConfig,
    zx: &Tensor,
    zy: &Tensor,
    rng: &mut ChaCha8Rng,
    report: &mut TrainReport,
) -> Result<TranslatorSet> {
    let start = Instant::now();
    let mut t = TranslatorTrainer::new(net, tc, zx, zy, rng)?;
    let steps = t.steps_per_epoch();
    for epoch in 1..=tc.tr_epochs {
        let lr = tc.tr_lr.rate(epoch);
        let mut m = EpochMeans::default();
        for step in 0..steps {
            let mut last = None;
            for _ in 0..tc.d_iters {
                let c = t.critic_step(rng, lr)?;
                m.add("critic_loss", check_finite(c.loss, "translator", "critic_loss", epoch, step)?, 1.0);
                last = Some(c);
            }
            let c = last.expect("d_iters >= 1");
            let gs = t.generator_step(rng, lr)?;
            m.add("gen_loss", check_finite(gs.loss, "translator", "gen_loss", epoch, step)?, 1.0);
            m.add("gp_x", c.gp_x, 1.0);
            m.add("gp_y", c.gp_y, 1.0);
            m.add("w_x", gs.w_x, 1.0);
            m.add("w_y", gs.w_y, 1.0);
            m.add("fp_x", gs.fp_x, 1.0);
            m.add("fp_y", gs.fp_y, 1.0);
            m.add("cycle", gs.cycle, 1.0);
            m.add("l_xy", gs.w_y + tc.lambda2 * c.gp_y + tc.alpha * gs.fp_y, 1.0);
            m.add("l_yx", gs.w_x + tc.lambda2 * c.gp_x + tc.alpha * gs.fp_x, 1.0);
        }
        if !(t.set.translators.is_finite() && t.set.critics.is_finite() && t.set.stats.is_finite()) {
            return Err(TrainError::NonFinite { phase: "translator", series: "parameters".into(), epoch, step: steps });
        }
        m.flush(report, epoch);
        let overall = m.get("l_xy") + m.get("l_yx") + tc.beta * m.get("cycle");
        report.record("overall", epoch, overall);
        report.record("lr", epoch, lr);
        log::info!("translator epoch {epoch}/{}: overall {overall:.4}", tc.tr_epochs);
    }
    report.wall_clock += start.elapsed().as_secs_f64();
    Ok(t.set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn setup() -> (NetConfig, TrainConfig, Tensor, Tensor) {
        let mut net = NetConfig::desk(2);
        net.sub_dim = 3;
        net.translator_hidden = vec![16; 4];
        net.critic_hidden = vec![16, 8, 4];
        let mut tc = TrainConfig::desk();
        tc.tr_batch = 8;
        tc.tr_epochs = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut codes = |n: usize, shift: f64| {
            Tensor::matrix(n, 12, (0..n * 12).map(|_| rng.gen_range(-1.0..1.0) + shift).collect()).unwrap()
        };
        let zx = codes(20, 0.5);
        let zy = codes(13, -0.5);
        (net, tc, zx, zy)
    }

    #[test]
    fn codes_are_standardized_over_both_domains() {
        let (net, tc, zx, zy) = setup();
        let t = TranslatorTrainer::new(&net, &tc, &zx, &zy, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let n = (zx.rows() + zy.rows()) as f64;
        for c in 0..zx.cols() {
            let col: Vec<f64> = (0..t.zx.rows()).map(|r| t.zx.row(r)[c]).chain((0..t.zy.rows()).map(|r| t.zy.row(r)[c])).collect();
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12, "column {c}: mean {mean}, var {var}");
        }
        let back = t.set.unstandardize(&t.zx).unwrap();
        assert!(back.data().iter().zip(zx.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn steps_touch_only_their_own_parameters() {
        let (net, tc, zx, zy) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = TranslatorTrainer::new(&net, &tc, &zx, &zy, &mut rng).unwrap();
        let (tr, cr) = (t.set.translators.digest(), t.set.critics.digest());
        t.critic_step(&mut rng, 1e-3).unwrap();
        assert_eq!(t.set.translators.digest(), tr);
        assert_ne!(t.set.critics.digest(), cr);
        let cr = t.set.critics.digest();
        t.generator_step(&mut rng, 1e-3).unwrap();
        assert_eq!(t.set.critics.digest(), cr);
        assert_ne!(t.set.translators.digest(), tr);
    }

    #[test]
    fn overall_is_sum_of_logged_components_and_schedule_logged() {
        let (net, mut tc, zx, zy) = setup();
        tc.tr_lr = crate::training::LrSchedule { initial: 2e-3, factor: 0.5, every: 1, floor: 5e-4 };
        let mut report = TrainReport::default();
        train_translators(&net, &tc, &zx, &zy, &mut ChaCha8Rng::seed_from_u64(2), &mut report).unwrap();
        let (a, b, c, o) = (report.values("l_xy"), report.values("l_yx"), report.values("cycle"), report.values("overall"));
        for e in 0..3 {
            assert_eq!(o[e], a[e] + b[e] + tc.beta * c[e]);
        }
        assert_eq!(report.values("lr"), vec![2e-3, 1e-3, 5e-4]);
        assert!(report.is_finite());
    }

    #[test]
    fn deterministic_given_seed() {
        let (net, tc, zx, zy) = setup();
        let run = || {
            let mut r = TrainReport::default();
            let s = train_translators(&net, &tc, &zx, &zy, &mut ChaCha8Rng::seed_from_u64(3), &mut r).unwrap();
            (s, r.to_csv())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn single_shape_domains_train() {
        let (net, mut tc, zx, zy) = setup();
        tc.tr_epochs = 2;
        let one_x = Tensor::matrix(1, 12, zx.row(0).to_vec()).unwrap();
        let one_y = Tensor::matrix(1, 12, zy.row(0).to_vec()).unwrap();
        let mut r = TrainReport::default();
        train_translators(&net, &tc, &one_x, &one_y, &mut ChaCha8Rng::seed_from_u64(4), &mut r).unwrap();
        assert!(r.is_finite());
    }

    #[test]
    fn fp_weighting_pulls_target_codes_toward_identity() {
        let (net, mut tc, zx, zy) = setup();
        tc.alpha = 200.0;
        tc.tr_epochs = 40;
        let mut improved = 0;
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(10 + seed);
            let init = TranslatorSet::init(&net, &mut rng.clone());
            let set = train_translators(&net, &tc, &zx, &zy, &mut rng, &mut TrainReport::default()).unwrap();
            let l1 = |s: &TranslatorSet| {
                let out = s.translate(&net, Direction::XtoY, &zy).unwrap();
                out.data().iter().zip(zy.data()).map(|(a, b)| (a - b).abs()).sum::<f64>()
            };
            if l1(&set) < l1(&init) {
                improved += 1;
            }
        }
        assert_eq!(improved, 5);
    }
}
