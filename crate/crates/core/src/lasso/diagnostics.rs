use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{DesignMatrix, LassoModel, OlsFit};

/// Anything that predicts a response for a design row.
pub trait RowPredictor {
    fn predict(&self, x: &DMatrix<f64>, row: usize) -> f64;
}

impl RowPredictor for LassoModel {
    fn predict(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        self.predict_row(x, row)
    }
}

impl RowPredictor for OlsFit {
    fn predict(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        self.predict_row(x, row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedActual {
    pub row_id_index: usize,
    pub predicted: f64,
    pub actual: f64,
}

/// One P-P plot coordinate: normal CDF of a standardized residual against
/// its empirical CDF position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpPoint {
    pub theoretical: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub pairs: Vec<PredictedActual>,
    pub pp: Vec<PpPoint>,
    pub mse: f64,
    /// `1 - SSE / SST` on the evaluated rows.
    pub explained_variance: f64,
    pub max_pp_deviation: f64,
    /// Residual variance is zero, so no P-P points were produced.
    pub degenerate: bool,
}

/// P-P coordinates for values that are already standardized: the `i`-th
/// smallest value sits at empirical position `(i + 0.5) / n`.
pub fn pp_points(standardized: &[f64]) -> Vec<PpPoint> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut z = standardized.to_vec();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, &v)| PpPoint {
            theoretical: normal.cdf(v),
            empirical: (i as f64 + 0.5) / n,
        })
        .collect()
}

pub fn max_pp_deviation(points: &[PpPoint]) -> f64 {
    points
        .iter()
        .map(|p| (p.theoretical - p.empirical).abs())
        .fold(0.0, f64::max)
}

/// Standardizes raw residuals (mean 0, population sd 1). Returns `None`
/// when every residual is the same.
pub fn standardize_residuals(residuals: &[f64]) -> Option<Vec<f64>> {
    let n = residuals.len() as f64;
    if residuals.is_empty() {
        return None;
    }
    let mean = residuals.iter().sum::<f64>() / n;
    let sd = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        return None;
    }
    Some(residuals.iter().map(|r| (r - mean) / sd).collect())
}

/// Diagnostics from predicted and actual values.
pub fn diagnostics_from_pairs(pairs: Vec<PredictedActual>) -> DiagnosticsReport {
    let residuals: Vec<f64> = pairs.iter().map(|p| p.actual - p.predicted).collect();
    let n = pairs.len().max(1) as f64;
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let y_mean = pairs.iter().map(|p| p.actual).sum::<f64>() / n;
    let sst: f64 = pairs.iter().map(|p| (p.actual - y_mean).powi(2)).sum();
    let explained_variance = if sst > 0.0 { 1.0 - sse / sst } else { 0.0 };
    let (pp, degenerate) = match standardize_residuals(&residuals) {
        Some(z) => (pp_points(&z), false),
        None => (Vec::new(), true),
    };
    DiagnosticsReport {
        max_pp_deviation: max_pp_deviation(&pp),
        pairs,
        pp,
        mse: sse / n,
        explained_variance,
        degenerate,
    }
}

/// Predicted-vs-actual pairs and a P-P plot of standardized residuals for
/// the given rows.
pub fn residual_diagnostics<M: RowPredictor>(
    model: &M,
    design: &DesignMatrix,
    rows: &[usize],
) -> DiagnosticsReport {
    let pairs = rows
        .iter()
        .map(|&i| PredictedActual {
            row_id_index: i,
            predicted: model.predict(&design.x, i),
            actual: design.y[i],
        })
        .collect();
    diagnostics_from_pairs(pairs)
}
