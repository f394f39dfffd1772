use super::{EvalError, Result};
use crate::kernels::PointCloud;

pub const GRID: usize = 8;

/// Occupancy histogram of a 2D cloud over its own bounding box, so the
/// features ignore position and scale. Scaled to mean 1 per cell.
pub fn occupancy(cloud: &PointCloud) -> Vec<f64> {
    let (lo, hi) = cloud.bbox();
    let mut h = vec![0.0; GRID * GRID];
    let cell = |v: f64, a: f64, b: f64| {
        let t = if b > a { (v - a) / (b - a) } else { 0.5 };
        ((t * GRID as f64) as usize).min(GRID - 1)
    };
    for p in cloud.points() {
        h[cell(p[1], lo[1], hi[1]) * GRID + cell(p[0], lo[0], hi[0])] += 1.0;
    }
    let scale = (GRID * GRID) as f64 / cloud.len() as f64;
    h.iter_mut().for_each(|v| *v *= scale);
    h
}

/// Logistic regression on occupancy features telling two shape families
/// apart. `predict` is the probability of the second family.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl FamilyClassifier {
    /// Full-batch gradient descent on the mean log loss with a small L2 term.
    pub fn train(first: &[PointCloud], second: &[PointCloud], iterations: usize) -> Result<Self> {
        if first.is_empty() || second.is_empty() {
            return Err(EvalError::Empty("classifier training family".into()));
        }
        if first.iter().chain(second).any(|c| c.dim() != 2 || c.is_empty()) {
            return Err(EvalError::Invalid("classifier needs non-empty 2D clouds".into()));
        }
        let data: Vec<(Vec<f64>, f64)> = first
            .iter()
            .map(|c| (occupancy(c), 0.0))
            .chain(second.iter().map(|c| (occupancy(c), 1.0)))
            .collect();
        let (lr, l2) = (0.1, 1e-4);
        let mut clf = FamilyClassifier { weights: vec![0.0; GRID * GRID], bias: 0.0 };
        let n = data.len() as f64;
        for _ in 0..iterations {
            let mut gw = vec![0.0; GRID * GRID];
            let mut gb = 0.0;
            for (x, y) in &data {
                let e = clf.probability(x) - y;
                gw.iter_mut().zip(x).for_each(|(g, v)| *g += e * v / n);
                gb += e / n;
            }
            clf.weights.iter_mut().zip(&gw).for_each(|(w, g)| *w -= lr * (g + l2 * *w));
            clf.bias -= lr * gb;
        }
        Ok(clf)
    }

    fn probability(&self, features: &[f64]) -> f64 {
        let z = self.bias + self.weights.iter().zip(features).map(|(w, v)| w * v).sum::<f64>();
        1.0 / (1.0 + (-z).exp())
    }

    pub fn predict(&self, cloud: &PointCloud) -> f64 {
        self.probability(&occupancy(cloud))
    }

    pub fn is_second(&self, cloud: &PointCloud) -> bool {
        self.predict(cloud) >= 0.5
    }
}
