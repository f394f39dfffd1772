use std::fmt::Write as _;

use super::{EvalError, Raster, Result};
use crate::kernels::PointCloud;
use crate::transport::{chamfer, emd_approx, emd_exact, AuctionConfig, EXACT_MAX_POINTS};

/// Mean squared pixel difference over binary pixels, and intersection over
/// union. Two empty rasters have IOU 1.
pub fn mse_iou(pred: &Raster, gt: &Raster) -> Result<(f64, f64)> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(EvalError::Invalid(format!(
            "raster sizes {}x{} and {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let (mut diff, mut inter, mut union) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.pixels.iter().zip(&gt.pixels) {
        diff += (p != g) as usize;
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    let mse = diff as f64 / pred.pixels.len() as f64;
    let iou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    Ok((mse, iou))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeMetrics {
    pub chamfer: f64,
    pub emd_per_n: f64,
}

/// Chamfer distance and matched EMD cost per point. EMD is exact up to
/// [`EXACT_MAX_POINTS`] points and uses the auction above.
pub fn shape_metrics(pred: &PointCloud, gt: &PointCloud, auction: &AuctionConfig) -> Result<ShapeMetrics> {
    let chamfer = chamfer(pred, gt)?;
    let m = if pred.len() <= EXACT_MAX_POINTS { emd_exact(pred, gt)? } else { emd_approx(pred, gt, auction)? };
    Ok(ShapeMetrics { chamfer, emd_per_n: m.cost / pred.len() as f64 })
}

/// How well a translation kept the source's placement and size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometryCheck {
    /// Distance between the point centroids.
    pub centroid_shift: f64,
    /// Output bounding-box diagonal over the source's.
    pub diagonal_ratio: f64,
}

impl GeometryCheck {
    pub fn new(source: &PointCloud, output: &PointCloud) -> Result<Self> {
        if source.dim() != output.dim() {
            return Err(EvalError::Invalid(format!("{}D source, {}D output", source.dim(), output.dim())));
        }
        if source.is_empty() || output.is_empty() {
            return Err(EvalError::Empty("cloud".into()));
        }
        let shift = source.centroid().iter().zip(output.centroid()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        Ok(GeometryCheck { centroid_shift: shift, diagonal_ratio: output.bbox_diagonal() / source.bbox_diagonal() })
    }

    /// Centroid within `centroid_tol` and diagonal within a relative `diag_tol`.
    pub fn passes(&self, centroid_tol: f64, diag_tol: f64) -> bool {
        self.centroid_shift <= centroid_tol && (self.diagonal_ratio - 1.0).abs() <= diag_tol
    }
}

/// Rows of `id,metric,value`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<(String, String, f64)>,
}

impl MetricsTable {
    pub fn push(&mut self, id: impl Into<String>, metric: impl Into<String>, value: f64) {
        self.rows.push((id.into(), metric.into(), value));
    }

    /// Mean of one metric over all ids.
    pub fn mean(&self, metric: &str) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.1 == metric).map(|r| r.2).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,metric,value\n");
        for (id, m, v) in &self.rows {
            let _ = writeln!(s, "{id},{m},{v:?}");
        }
        s
    }
}
