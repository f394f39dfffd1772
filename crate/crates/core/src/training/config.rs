use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::transport::AuctionConfig;

/// Piecewise-constant learning rate: `initial`, multiplied by `factor` after
/// every `every` epochs, never below `floor`. `every == 0` keeps it constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub factor: f64,
    pub every: usize,
    pub floor: f64,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        LrSchedule { initial: lr, factor: 1.0, every: 0, floor: lr }
    }

    /// Rate for 1-based `epoch`.
    pub fn rate(&self, epoch: usize) -> f64 {
        if self.every == 0 {
            return self.initial;
        }
        let drops = (epoch.max(1) - 1) / self.every;
        let mut lr = self.initial;
        for _ in 0..drops {
            lr *= self.factor;
            if lr <= self.floor {
                return self.floor;
            }
        }
        lr.max(self.floor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the sub-code reconstruction terms.
    pub lambda1: f64,
    /// Feature-preservation weight.
    pub alpha: f64,
    /// Gradient-penalty weight.
    pub lambda2: f64,
    /// Cycle-consistency weight.
    pub beta: f64,
    pub ae_epochs: usize,
    pub ae_batch: usize,
    pub ae_lr: LrSchedule,
    pub tr_epochs: usize,
    pub tr_batch: usize,
    pub d_iters: usize,
    pub tr_lr: LrSchedule,
    pub up_epochs: usize,
    pub up_batch: usize,
    pub up_lr: LrSchedule,
    /// Points per cloud compared in the upsampler loss.
    pub up_subset: usize,
    pub auction: AuctionConfig,
}

impl TrainConfig {
    pub fn full() -> Self {
        TrainConfig {
            lambda1: 0.1,
            alpha: 20.0,
            lambda2: 10.0,
            beta: 20.0,
            ae_epochs: 400,
            ae_batch: 32,
            ae_lr: LrSchedule::constant(5e-4),
            tr_epochs: 600,
            tr_batch: 128,
            d_iters: 2,
            tr_lr: LrSchedule { initial: 2e-3, factor: 0.5, every: 100, floor: 5e-4 },
            up_epochs: 80,
            up_batch: 32,
            up_lr: LrSchedule::constant(5e-4),
            up_subset: 4096,
            auction: AuctionConfig::default(),
        }
    }

    /// Same losses and weights with shorter schedules for a single CPU core.
    pub fn desk() -> Self {
        TrainConfig {
            ae_epochs: 200,
            ae_lr: LrSchedule::constant(1e-3),
            tr_epochs: 120,
            tr_lr: LrSchedule { initial: 2e-3, factor: 0.5, every: 20, floor: 5e-4 },
            up_epochs: 20,
            up_subset: 128,
            auction: AuctionConfig { rel_gap: 1e-2, ..AuctionConfig::default() },
            // Chosen by pilot runs on standardized codes.
            alpha: 40.0,
            ..TrainConfig::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [self.lambda1, self.alpha, self.lambda2, self.beta];
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(TrainError::Invalid("loss weights must be finite and non-negative".into()));
        }
        if self.ae_batch == 0 || self.tr_batch == 0 || self.up_batch == 0 || self.d_iters == 0 || self.up_subset == 0 {
            return Err(TrainError::Invalid("batch sizes, critic iterations and subset size must be positive".into()));
        }
        for s in [&self.ae_lr, &self.tr_lr, &self.up_lr] {
            if !(s.initial > 0.0) || !(s.floor > 0.0) || !(s.factor > 0.0 && s.factor <= 1.0) {
                return Err(TrainError::Invalid(format!("learning-rate schedule {s:?} is not positive and non-increasing")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn translator_schedule_matches_plan() {
        let s = TrainConfig::full().tr_lr;
        for e in 1..=100 {
            assert_eq!(s.rate(e), 2e-3);
        }
        for e in 101..=200 {
            assert_eq!(s.rate(e), 1e-3);
        }
        for e in 201..=600 {
            assert_eq!(s.rate(e), 5e-4);
        }
    }

    #[test]
    fn full_defaults() {
        let c = TrainConfig::full();
        assert_eq!((c.ae_epochs, c.tr_epochs, c.up_epochs), (400, 600, 80));
        assert_eq!((c.ae_batch, c.tr_batch, c.up_batch, c.d_iters), (32, 128, 32, 2));
        assert_eq!((c.lambda1, c.alpha, c.lambda2, c.beta), (0.1, 20.0, 10.0, 20.0));
        assert_eq!(c.ae_lr.rate(399), 5e-4);
        c.validate().unwrap();
        TrainConfig::desk().validate().unwrap();
        assert_eq!(TrainConfig::desk().alpha, 40.0);
    }

    #[test]
    fn rejects_negative_weight_and_increasing_schedule() {
        let mut c = TrainConfig::desk();
        c.alpha = -1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::desk();
        c.tr_lr.factor = 2.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = TrainConfig::desk();
        assert_eq!(toml::from_str::<TrainConfig>(&toml::to_string(&c).unwrap()).unwrap(), c);
    }
}
