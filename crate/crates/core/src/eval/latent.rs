use std::fmt::Write as _;

use super::{EvalError, Result};

/// Per-dimension mean absolute code change with the `k` most and `k` least
/// changed dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeChangeProfile {
    pub mean_abs: Vec<f64>,
    /// Descending by change, ties to the lower index.
    pub top: Vec<usize>,
    /// Ascending by change among the dimensions not in `top`, ties to the
    /// lower index.
    pub bottom: Vec<usize>,
}

impl CodeChangeProfile {
    /// `dim,mean_abs_change,rank_set` with rank_set one of top, bottom, none.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("dim,mean_abs_change,rank_set\n");
        for (d, v) in self.mean_abs.iter().enumerate() {
            let set = if self.top.contains(&d) {
                "top"
            } else if self.bottom.contains(&d) {
                "bottom"
            } else {
                "none"
            };
            let _ = writeln!(s, "{d},{v:?},{set}");
        }
        s
    }
}

pub fn code_change_profile(before: &[Vec<f64>], after: &[Vec<f64>], k: usize) -> Result<CodeChangeProfile> {
    if before.len() != after.len() {
        return Err(EvalError::Invalid(format!("{} codes before, {} after", before.len(), after.len())));
    }
    if before.is_empty() {
        return Err(EvalError::Empty("code set".into()));
    }
    let dim = before[0].len();
    if before.iter().chain(after).any(|c| c.len() != dim) {
        return Err(EvalError::Invalid("codes differ in width".into()));
    }
    if 2 * k > dim {
        return Err(EvalError::Invalid(format!("top and bottom {k} do not fit in {dim} dimensions")));
    }
    let mut mean_abs = vec![0.0; dim];
    for (b, a) in before.iter().zip(after) {
        for (m, (x, y)) in mean_abs.iter_mut().zip(b.iter().zip(a)) {
            *m += (y - x).abs();
        }
    }
    mean_abs.iter_mut().for_each(|m| *m /= before.len() as f64);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| mean_abs[j].total_cmp(&mean_abs[i]).then(i.cmp(&j)));
    let top: Vec<usize> = order[..k].to_vec();
    let mut rest: Vec<usize> = order[k..].to_vec();
    rest.sort_by(|&i, &j| mean_abs[i].total_cmp(&mean_abs[j]).then(i.cmp(&j)));
    let bottom = rest[..k].to_vec();
    Ok(CodeChangeProfile { mean_abs, top, bottom })
}

/// Discretized codes of both domains (X first) and their pairwise Hamming
/// distances, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub codes: Vec<Vec<i64>>,
    pub distances: Vec<u32>,
    /// Dimensions whose standard deviation was clamped, as (domain, dim).
    pub clamped: Vec<(char, usize)>,
}

const MIN_STD: f64 = 1e-8;

fn discretize(codes: &[Vec<f64>], domain: char, clamped: &mut Vec<(char, usize)>) -> Vec<Vec<i64>> {
    let dim = codes[0].len();
    let n = codes.len() as f64;
    let mut mean = vec![0.0; dim];
    let mut std = vec![0.0; dim];
    for c in codes {
        mean.iter_mut().zip(c).for_each(|(m, v)| *m += v / n);
    }
    for c in codes {
        std.iter_mut().zip(c.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n);
    }
    for (d, s) in std.iter_mut().enumerate() {
        *s = s.sqrt();
        if *s < MIN_STD {
            log::warn!("domain {domain} dimension {d} has zero variance");
            clamped.push((domain, d));
            *s = MIN_STD;
        }
    }
    codes
        .iter()
        .map(|c| c.iter().enumerate().map(|(d, v)| ((v - mean[d]) / std[d] * 3.0).round() as i64).collect())
        .collect()
}

/// Standardizes each domain per dimension, multiplies by 3 and rounds, then
/// counts differing dimensions between every pair of codes.
pub fn embedding_distances(codes_x: &[Vec<f64>], codes_y: &[Vec<f64>]) -> Result<Embedding> {
    if codes_x.is_empty() || codes_y.is_empty() {
        return Err(EvalError::Empty("code set".into()));
    }
    let dim = codes_x[0].len();
    if codes_x.iter().chain(codes_y).any(|c| c.len() != dim) {
        return Err(EvalError::Invalid("codes differ in width".into()));
    }
    let mut clamped = Vec::new();
    let mut codes = discretize(codes_x, 'x', &mut clamped);
    codes.extend(discretize(codes_y, 'y', &mut clamped));
    let n = codes.len();
    let mut distances = vec![0u32; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let h = codes[i].iter().zip(&codes[j]).filter(|(a, b)| a != b).count() as u32;
            distances[i * n + j] = h;
            distances[j * n + i] = h;
        }
    }
    Ok(Embedding { codes, distances, clamped })
}

impl Embedding {
    /// `# rows cols` header, then the matrix row-major.
    pub fn distances_text(&self) -> String {
        let n = self.codes.len();
        let mut s = format!("# {n} {n}\n");
        for row in self.distances.chunks(n.max(1)) {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn codes_text(&self) -> String {
        let width = self.codes.first().map_or(0, Vec::len);
        let mut s = format!("# {} {width}\n", self.codes.len());
        for c in &self.codes {
            let line: Vec<String> = c.iter().map(i64::to_string).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}
