use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AutodiffError, Gradients, ParamSet, Result, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one pair per parameter.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState { config, step: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }
}

/// One bias-corrected Adam update of every parameter that has a gradient.
/// Parameters without a gradient entry (running statistics, frozen layers)
/// are left untouched.
pub fn adam_step(params: &mut ParamSet, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr > 0.0) {
        return Err(AutodiffError::InvalidArgument(format!("learning rate {lr} must be positive")));
    }
    for (name, g) in grads {
        let p = params.get(name)?;
        if p.shape() != g.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "adam",
                detail: format!("{name}: param {:?} vs grad {:?}", p.shape(), g.shape()),
            });
        }
        for moments in [&state.m, &state.v] {
            if let Some(t) = moments.get(name) {
                if t.shape() != g.shape() {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "adam",
                        detail: format!("{name}: state {:?} vs grad {:?}", t.shape(), g.shape()),
                    });
                }
            }
        }
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    for (name, g) in grads {
        let m = state.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
        let v = state.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
        let p = params.get_mut(name)?;
        for (((pi, mi), vi), &gi) in
            p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data())
        {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *pi -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
