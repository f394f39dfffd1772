//! Loss terms and the three training phases: autoencoder, latent
//! translators with critics, and the upsampling head.

mod ae;
mod config;
pub mod losses;
mod report;
mod translator;
mod upsampler;

pub use ae::{train_autoencoder, AeData};
pub use config::{LrSchedule, TrainConfig};
pub use report::TrainReport;
pub use translator::{train_translators, CriticStep, Direction, GeneratorStep, TranslatorSet, TranslatorTrainer};
pub use upsampler::train_upsampler;

use crate::autodiff::AutodiffError;
use crate::networks::NetError;
use crate::transport::TransportError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite {series} in {phase} at epoch {epoch}, step {step}")]
    NonFinite { phase: &'static str, series: String, epoch: usize, step: usize },
    #[error("invalid training input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

impl TrainError {
    /// True when training stopped because a value became NaN or infinite.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            TrainError::NonFinite { .. }
                | TrainError::Autodiff(AutodiffError::NonFinite { .. })
                | TrainError::Net(NetError::Autodiff(AutodiffError::NonFinite { .. }))
                | TrainError::Transport(TransportError::Autodiff(AutodiffError::NonFinite { .. }))
        )
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

fn check_finite(value: f64, phase: &'static str, series: &str, epoch: usize, step: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        log::error!("{phase}: {series} = {value} at epoch {epoch}, step {step}");
        Err(TrainError::NonFinite { phase, series: series.to_string(), epoch, step })
    }
}

/// Running weighted means of per-step values within one epoch.
#[derive(Default)]
struct EpochMeans {
    sums: std::collections::BTreeMap<&'static str, (f64, f64)>,
}

impl EpochMeans {
    fn add(&mut self, name: &'static str, value: f64, weight: f64) {
        let e = self.sums.entry(name).or_insert((0.0, 0.0));
        e.0 += value * weight;
        e.1 += weight;
    }

    fn get(&self, name: &str) -> f64 {
        self.sums.get(name).map_or(0.0, |(s, w)| if *w > 0.0 { s / w } else { 0.0 })
    }

    fn flush(&self, report: &mut TrainReport, epoch: usize) {
        for name in self.sums.keys() {
            report.record(name, epoch, self.get(name));
        }
    }
}
