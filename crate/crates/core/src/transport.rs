//! Point-set distances: exact and auction-based Earth Mover's Distance,
//! a differentiable EMD loss over a frozen matching, and Chamfer distance.

use rayon::prelude::*;

use crate::autodiff::{AutodiffError, Graph, NodeId, Tensor};
use crate::kernels::PointCloud;

/// Largest problem accepted by [`emd_exact`].
pub const EXACT_MAX_POINTS: usize = 512;

/// Above this size the auction computes distances on demand instead of
/// caching the full cost matrix.
const DENSE_COST_LIMIT: usize = 2048;

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("point counts differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("exact EMD limited to {EXACT_MAX_POINTS} points, got {0}")]
    TooLarge(usize),
    #[error("auction did not converge within {0} bids")]
    NonConvergence(usize),
    #[error("empty input")]
    Empty,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, TransportError>;

/// Bijection from points of `a` to points of `b` with its summed Euclidean cost.
#[derive(Clone, Debug, PartialEq)]
pub struct Matching {
    pub permutation: Vec<usize>,
    pub cost: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_pair(a: &PointCloud, b: &PointCloud) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(TransportError::DimMismatch(a.dim(), b.dim()));
    }
    if a.len() != b.len() {
        return Err(TransportError::SizeMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// Summed distance of a permutation, accumulated in index order.
pub fn matching_cost(a: &PointCloud, b: &PointCloud, permutation: &[usize]) -> f64 {
    permutation.iter().enumerate().map(|(i, &j)| dist(a.point(i), b.point(j))).sum()
}

/// Optimal assignment by the Hungarian method with potentials, O(n³).
pub fn emd_exact(a: &PointCloud, b: &PointCloud) -> Result<Matching> {
    check_pair(a, b)?;
    let n = a.len();
    if n > EXACT_MAX_POINTS {
        return Err(TransportError::TooLarge(n));
    }
    let cost = |i: usize, j: usize| dist(a.point(i - 1), b.point(j - 1));
    // 1-based arrays; column 0 is the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut permutation = vec![0; n];
    for j in 1..=n {
        permutation[p[j] - 1] = j - 1;
    }
    let cost = matching_cost(a, b, &permutation);
    Ok(Matching { permutation, cost })
}

/// ε-scaling schedule for [`emd_approx`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AuctionConfig {
    /// Target relative optimality gap; the final ε is `rel_gap · LB / n`
    /// for a lower bound LB on the optimal cost.
    pub rel_gap: f64,
    /// ε is divided by this factor between phases.
    pub factor: f64,
    /// Total bid budget per call, as a multiple of n.
    pub max_bids_per_point: usize,
}

impl Default for AuctionConfig {
    fn default() -> Self {
        AuctionConfig { rel_gap: 2e-3, factor: 5.0, max_bids_per_point: 20_000 }
    }
}

enum Costs<'a> {
    Dense(Vec<f64>),
    Lazy(&'a PointCloud, &'a PointCloud),
}

impl Costs<'_> {
    #[inline]
    fn get(&self, n: usize, i: usize, j: usize) -> f64 {
        match self {
            Costs::Dense(c) => c[i * n + j],
            Costs::Lazy(a, b) => dist(a.point(i), b.point(j)),
        }
    }
}

/// Near-optimal assignment by a Gauss-Seidel forward auction with ε-scaling.
/// The reported cost is the true cost of the returned bijection.
pub fn emd_approx(a: &PointCloud, b: &PointCloud, cfg: &AuctionConfig) -> Result<Matching> {
    check_pair(a, b)?;
    let n = a.len();
    if n == 1 {
        return Ok(Matching { permutation: vec![0], cost: dist(a.point(0), b.point(0)) });
    }
    let costs = if n <= DENSE_COST_LIMIT {
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                c[i * n + j] = dist(a.point(i), b.point(j));
            }
        }
        Costs::Dense(c)
    } else {
        Costs::Lazy(a, b)
    };
    let mut row_min = vec![f64::INFINITY; n];
    let mut col_min = vec![f64::INFINITY; n];
    let mut cmax: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = costs.get(n, i, j);
            row_min[i] = row_min[i].min(c);
            col_min[j] = col_min[j].min(c);
            cmax = cmax.max(c);
        }
    }
    if cmax == 0.0 {
        return Ok(Matching { permutation: (0..n).collect(), cost: 0.0 });
    }
    let lower = row_min.iter().sum::<f64>().max(col_min.iter().sum::<f64>());
    let eps_final = (cfg.rel_gap * lower / n as f64).max(1e-12 * cmax);
    let max_bids = cfg.max_bids_per_point.saturating_mul(n);

    let mut price = vec![0.0; n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut bids = 0usize;
    let mut eps = (cmax / 4.0).max(eps_final);
    loop {
        owner.iter_mut().for_each(|o| *o = None);
        assigned.iter_mut().for_each(|o| *o = None);
        let mut queue: Vec<usize> = (0..n).rev().collect();
        while let Some(i) = queue.pop() {
            bids += 1;
            if bids > max_bids {
                return Err(TransportError::NonConvergence(max_bids));
            }
            // Best and second-best value of -cost - price.
            let (mut v1, mut v2, mut j1) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
            for j in 0..n {
                let v = -costs.get(n, i, j) - price[j];
                if v > v1 {
                    v2 = v1;
                    v1 = v;
                    j1 = j;
                } else if v > v2 {
                    v2 = v;
                }
            }
            price[j1] += v1 - v2 + eps;
            if let Some(prev) = owner[j1].replace(i) {
                assigned[prev] = None;
                queue.push(prev);
            }
            assigned[i] = Some(j1);
        }
        if eps <= eps_final {
            break;
        }
        eps = (eps / cfg.factor).max(eps_final);
    }
    let permutation: Vec<usize> = assigned.into_iter().map(|j| j.expect("auction leaves every row assigned")).collect();
    let cost = matching_cost(a, b, &permutation);
    Ok(Matching { permutation, cost })
}

fn cloud_of(t: &Tensor, rows: std::ops::Range<usize>, dim: usize) -> std::result::Result<PointCloud, AutodiffError> {
    let data = t.data()[rows.start * dim..rows.end * dim].to_vec();
    PointCloud::new(dim, data).map_err(|e| AutodiffError::InvalidArgument(e.to_string()))
}

/// Mean matched distance between predicted rows `[n × d]` and `target`.
/// The matching is computed on current values and held fixed, so gradients
/// reach `predicted` only through the coordinates.
pub fn emd_loss(g: &mut Graph, predicted: NodeId, target: &PointCloud, cfg: &AuctionConfig) -> Result<NodeId> {
    emd_loss_batch(g, predicted, std::slice::from_ref(target), cfg)
}

/// Batched [`emd_loss`]: `predicted` stacks `targets.len()` clouds of equal
/// size; the result is the mean over the batch of per-cloud mean distances.
pub fn emd_loss_batch(g: &mut Graph, predicted: NodeId, targets: &[PointCloud], cfg: &AuctionConfig) -> Result<NodeId> {
    let Some(first) = targets.first() else {
        return Err(TransportError::Empty);
    };
    let (n, d) = (first.len(), first.dim());
    let shape = g.shape(predicted).to_vec();
    if shape != [targets.len() * n, d] {
        return Err(AutodiffError::ShapeMismatch {
            op: "emd_loss",
            detail: format!("predicted {:?} vs {} targets of {}x{}", shape, targets.len(), n, d),
        }
        .into());
    }
    for t in targets {
        check_pair(first, t)?;
    }
    let values = g.get(predicted)?.clone();
    let matchings: Vec<Matching> = targets
        .par_iter()
        .enumerate()
        .map(|(k, t)| emd_approx(&cloud_of(&values, k * n..(k + 1) * n, d)?, t, cfg))
        .collect::<Result<_>>()?;
    let mut permuted = Vec::with_capacity(targets.len() * n * d);
    for (t, m) in targets.iter().zip(&matchings) {
        for &j in &m.permutation {
            permuted.extend_from_slice(t.point(j));
        }
    }
    let tgt = g.constant(Tensor::matrix(targets.len() * n, d, permuted)?);
    let diff = g.sub(predicted, tgt)?;
    let dists = g.row_norm(diff)?;
    let total = g.sum_all(dists)?;
    Ok(g.scale(total, 1.0 / (n * targets.len()) as f64)?)
}

/// Symmetric Chamfer distance with squared nearest-neighbor distances.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(TransportError::DimMismatch(a.dim(), b.dim()));
    }
    let directed = |x: &PointCloud, y: &PointCloud| {
        x.points()
            .map(|p| {
                y.points()
                    .map(|q| p.iter().zip(q).map(|(s, t)| (s - t) * (s - t)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / x.len() as f64
    };
    Ok(directed(a, b) + directed(b, a))
}
