use std::collections::BTreeMap;

use rand::Rng;
use sha2::{Digest, Sha256};

use super::{AutodiffError, Graph, NodeId, Result, Tensor};

/// Named tensors making up one network's parameters (and any running
/// statistics stored next to them).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors.get_mut(name).ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn into_map(self) -> BTreeMap<String, Tensor> {
        self.tensors
    }

    pub fn from_map(tensors: BTreeMap<String, Tensor>) -> Self {
        ParamSet { tensors }
    }

    /// Adds every tensor of `other` under `prefix`.
    pub fn merge_prefixed(&mut self, prefix: &str, other: &ParamSet) {
        for (k, v) in other.iter() {
            self.tensors.insert(format!("{prefix}{k}"), v.clone());
        }
    }

    /// Tensors whose name starts with `prefix`, with the prefix stripped.
    pub fn extract_prefixed(&self, prefix: &str) -> ParamSet {
        let tensors = self
            .tensors
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
            .collect();
        ParamSet { tensors }
    }

    /// Adds an affine layer `fan_in -> fan_out`: Glorot-uniform weights, zero bias.
    pub fn add_affine<R: Rng>(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
        self.insert(format!("{name}.w"), Tensor::matrix(fan_in, fan_out, w).expect("sized above"));
        self.insert(format!("{name}.b"), Tensor::zeros(&[fan_out]));
    }

    /// SHA-256 over names, shapes and values; equal digests mean bit-identical sets.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.tensors {
            h.update((k.len() as u64).to_le_bytes());
            h.update(k.as_bytes());
            for &d in v.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for x in v.data() {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Binds every tensor into `g`, as trainable parameters or as constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundParams {
        let nodes = self
            .tensors
            .iter()
            .map(|(k, v)| {
                let id = if trainable { g.param(k, v.clone()) } else { g.constant(v.clone()) };
                (k.clone(), id)
            })
            .collect();
        BoundParams { nodes }
    }
}

/// Node ids of a [`ParamSet`] bound into a graph.
#[derive(Clone, Debug)]
pub struct BoundParams {
    nodes: BTreeMap<String, NodeId>,
}

impl BoundParams {
    pub fn node(&self, name: &str) -> Result<NodeId> {
        self.nodes.get(name).copied().ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }
}
