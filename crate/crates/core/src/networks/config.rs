use serde::{Deserialize, Serialize};

use super::{NetError, Result};

/// One set-abstraction stage of the encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    /// Farthest-point samples taken from the previous level.
    pub centers: usize,
    /// Ball-query radius, in units of the normalized bounding-box diagonal.
    pub radius: f64,
    pub group: usize,
    /// Shared per-point MLP widths; every layer is followed by ReLU.
    pub mlp: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub dim: usize,
    pub points: usize,
    pub sub_dim: usize,
    pub stages: Vec<StageConfig>,
    /// Hidden widths of the per-stage global MLP; its output width is `sub_dim`.
    pub global_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub translator_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub upsample_m: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub fps_seed: u64,
}

impl NetConfig {
    pub fn full(dim: usize) -> Self {
        let stage = |centers, radius| StageConfig { centers, radius, group: 32, mlp: vec![64, 64, 128] };
        NetConfig {
            dim,
            points: 2048,
            sub_dim: 64,
            stages: vec![stage(512, 0.1), stage(256, 0.2), stage(128, 0.4), stage(64, 0.8)],
            global_hidden: vec![128],
            decoder_hidden: vec![512, 512, 1024],
            translator_hidden: vec![512; 4],
            critic_hidden: vec![512, 256, 128],
            upsample_m: 8,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            fps_seed: 0,
        }
    }

    /// Narrow variant that trains on one CPU core in minutes.
    pub fn desk(dim: usize) -> Self {
        let stage = |centers, radius| StageConfig { centers, radius, group: 16, mlp: vec![32, 32] };
        NetConfig {
            dim,
            points: 128,
            sub_dim: 16,
            stages: vec![stage(64, 0.1), stage(32, 0.2), stage(16, 0.4), stage(8, 0.8)],
            global_hidden: vec![32],
            decoder_hidden: vec![128, 128, 256],
            translator_hidden: vec![128; 4],
            critic_hidden: vec![128, 64, 32],
            upsample_m: 4,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            fps_seed: 0,
        }
    }

    pub fn code_dim(&self) -> usize {
        self.sub_dim * self.stages.len()
    }

    /// Point count of encoder level `s` (level 0 is the input).
    pub fn level_size(&self, s: usize) -> usize {
        if s == 0 {
            self.points
        } else {
            self.stages[s - 1].centers
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NetError::Config(m));
        if self.dim != 2 && self.dim != 3 {
            return bad(format!("dim {}", self.dim));
        }
        if self.stages.is_empty() || self.sub_dim == 0 {
            return bad("need at least one stage and a non-empty sub-code".into());
        }
        for (s, st) in self.stages.iter().enumerate() {
            if st.centers == 0 || st.centers > self.level_size(s) {
                return bad(format!("stage {s} samples {} of {}", st.centers, self.level_size(s)));
            }
            if !(st.radius > 0.0) || st.group == 0 || st.mlp.is_empty() {
                return bad(format!("stage {s} radius/group/mlp"));
            }
        }
        if self.decoder_hidden.is_empty() || self.translator_hidden.is_empty() || self.critic_hidden.is_empty() {
            return bad("hidden layer lists must be non-empty".into());
        }
        if self.upsample_m < 2 {
            return bad(format!("upsample_m {} < 2", self.upsample_m));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) || !(self.bn_eps > 0.0) {
            return bad("batch-norm momentum/eps".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate_and_sizes() {
        for cfg in [NetConfig::full(3), NetConfig::desk(2)] {
            cfg.validate().unwrap();
        }
        assert_eq!(NetConfig::full(3).code_dim(), 256);
        assert_eq!(NetConfig::desk(2).code_dim(), 64);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = NetConfig::desk(2);
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<NetConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_oversampling() {
        let mut cfg = NetConfig::desk(2);
        cfg.stages[1].centers = 100;
        assert!(cfg.validate().is_err());
    }
}
