use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{KernelError, PointCloud, Result};

/// Below this many points `ball_query` scans all pairs instead of hashing.
const GRID_THRESHOLD: usize = 4096;

/// Farthest-point sampling with the first index drawn uniformly from `seed`.
pub fn farthest_point_sample(cloud: &PointCloud, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(KernelError::TooMany { k, n });
    }
    let first = ChaCha8Rng::seed_from_u64(seed).gen_range(0..n);
    farthest_point_sample_from(cloud, k, first)
}

/// Farthest-point sampling from a given first index. Each step takes the
/// point maximizing the distance to the chosen set, ties to the lowest index.
pub fn farthest_point_sample_from(cloud: &PointCloud, k: usize, first: usize) -> Result<Vec<usize>> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(KernelError::TooMany { k, n });
    }
    if first >= n {
        return Err(KernelError::Invalid(format!("first index {first} out of {n}")));
    }
    let mut chosen = Vec::with_capacity(k);
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut current = first;
    for _ in 0..k {
        chosen.push(current);
        let mut best = (f64::NEG_INFINITY, 0usize);
        for i in 0..n {
            let d = cloud.dist2(i, current);
            if d < min_d2[i] {
                min_d2[i] = d;
            }
            if min_d2[i] > best.0 {
                best = (min_d2[i], i);
            }
        }
        current = best.1;
    }
    Ok(chosen)
}

/// Neighborhoods around sampled centers.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupingResult {
    pub centers: Vec<usize>,
    /// One list per center, each exactly `max_group` long after padding.
    pub members: Vec<Vec<usize>>,
    pub radius: f64,
}

/// Up to `max_group` points within `radius` of each center: the center
/// first, then neighbors by (distance, index). Short groups are padded by
/// repeating the center.
pub fn ball_query(cloud: &PointCloud, centers: &[usize], radius: f64, max_group: usize) -> Result<GroupingResult> {
    if centers.is_empty() {
        return Err(KernelError::Invalid("no centers".into()));
    }
    if !(radius > 0.0) || max_group == 0 {
        return Err(KernelError::Invalid(format!("radius {radius}, max_group {max_group}")));
    }
    if let Some(&c) = centers.iter().find(|&&c| c >= cloud.len()) {
        return Err(KernelError::Invalid(format!("center {c} out of {}", cloud.len())));
    }
    let r2 = radius * radius;
    let grid = (cloud.len() >= GRID_THRESHOLD).then(|| Grid::build(cloud, radius));
    let members = centers
        .iter()
        .map(|&c| {
            let mut cand: Vec<(f64, usize)> = match &grid {
                Some(g) => g.near(cloud, c),
                None => (0..cloud.len()).collect(),
            }
            .into_iter()
            .filter(|&i| i != c)
            .map(|i| (cloud.dist2(i, c), i))
            .filter(|&(d, _)| d <= r2)
            .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut group = Vec::with_capacity(max_group);
            group.push(c);
            group.extend(cand.iter().take(max_group - 1).map(|&(_, i)| i));
            group.resize(max_group, c);
            group
        })
        .collect();
    Ok(GroupingResult { centers: centers.to_vec(), members, radius })
}

/// Uniform hash grid with cell size equal to the query radius.
struct Grid {
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl Grid {
    fn key(&self, p: &[f64]) -> [i64; 3] {
        let mut k = [0i64; 3];
        for (d, v) in p.iter().enumerate() {
            k[d] = (v / self.cell).floor() as i64;
        }
        k
    }

    fn build(cloud: &PointCloud, cell: f64) -> Grid {
        let mut g = Grid { cell, cells: HashMap::new() };
        for i in 0..cloud.len() {
            let k = g.key(cloud.point(i));
            g.cells.entry(k).or_default().push(i);
        }
        g
    }

    fn near(&self, cloud: &PointCloud, c: usize) -> Vec<usize> {
        let k = self.key(cloud.point(c));
        let zr = if cloud.dim() == 3 { -1..=1 } else { 0..=0 };
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in zr.clone() {
                    if let Some(v) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    fn line(xs: &[f64]) -> PointCloud {
        PointCloud::new(2, xs.iter().flat_map(|&x| [x, 0.0]).collect()).unwrap()
    }

    #[test]
    fn collinear_max_min() {
        let c = line(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(farthest_point_sample_from(&c, 2, 0).unwrap(), vec![0, 3]);
    }

    #[test]
    fn exhaustive_selection() {
        let c = line(&[0.0, 0.3, 2.0, 3.0, 7.0]);
        for seed in 0..10 {
            let mut idx = farthest_point_sample(&c, 5, seed).unwrap();
            idx.sort();
            assert_eq!(idx, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn too_many_rejected() {
        let c = line(&[0.0, 1.0]);
        assert!(matches!(farthest_point_sample(&c, 3, 0), Err(KernelError::TooMany { .. })));
    }

    #[test]
    fn ties_break_to_lowest_index() {
        // From 0, the points at +1 and -1 (indices 1 and 2) tie.
        let c = line(&[0.0, 1.0, -1.0]);
        assert_eq!(farthest_point_sample_from(&c, 2, 0).unwrap(), vec![0, 1]);
    }

    fn grid5() -> PointCloud {
        let mut pts = Vec::new();
        for y in 0..5 {
            for x in 0..5 {
                pts.extend([x as f64, y as f64]);
            }
        }
        PointCloud::new(2, pts).unwrap()
    }

    #[test]
    fn grid_interior_center_captures_axis_neighbors() {
        let c = grid5();
        let g = ball_query(&c, &[12], 1.01, 5).unwrap();
        // center (2,2) then the four axis neighbors by index
        assert_eq!(g.members[0], vec![12, 7, 11, 13, 17]);
    }

    #[test]
    fn isolated_and_singleton_groups() {
        let c = grid5();
        let g = ball_query(&c, &[0, 12, 24], 0.5, 4).unwrap();
        assert_eq!(g.members, vec![vec![0; 4], vec![12; 4], vec![24; 4]]);
        let g = ball_query(&c, &[3, 9], 10.0, 1).unwrap();
        assert_eq!(g.members, vec![vec![3], vec![9]]);
    }

    #[test]
    fn empty_centers_rejected() {
        assert!(ball_query(&grid5(), &[], 1.0, 2).is_err());
    }

    #[test]
    fn grid_hashing_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<f64> = (0..GRID_THRESHOLD * 3 + 30).map(|_| rng.gen_range(0.0..1.0)).collect();
        let c = PointCloud::new(3, pts).unwrap();
        assert!(c.len() >= GRID_THRESHOLD);
        let centers = [0, 17, 400, 4000];
        let fast = ball_query(&c, &centers, 0.08, 12).unwrap();
        for (k, &ctr) in centers.iter().enumerate() {
            let mut all: Vec<(f64, usize)> =
                (0..c.len()).filter(|&i| i != ctr).map(|i| (c.dist2(i, ctr), i)).filter(|p| p.0 <= 0.0064).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut expected = vec![ctr];
            expected.extend(all.iter().take(11).map(|p| p.1));
            expected.resize(12, ctr);
            assert_eq!(fast.members[k], expected);
        }
    }

    proptest! {
        #[test]
        fn fps_min_distances_non_increasing(
            pts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..64),
            seed in 0u64..1000,
        ) {
            let c = PointCloud::new(2, pts.iter().flat_map(|&(a, b)| [a, b]).collect()).unwrap();
            let idx = farthest_point_sample(&c, c.len(), seed).unwrap();
            let mut prev = f64::INFINITY;
            for s in 1..idx.len() {
                let d = (0..s).map(|t| c.dist2(idx[s], idx[t])).fold(f64::INFINITY, f64::min);
                prop_assert!(d <= prev);
                prev = d;
            }
        }
    }
}
