use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PurchaseMatrix;

/// Standardized predictors and response for the value regression.
///
/// Columns are centred and scaled to unit population variance; columns that
/// are constant over the rows are removed and listed in `dropped_constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub column_means: Vec<f64>,
    pub column_scales: Vec<f64>,
    pub col_ids: Vec<String>,
    pub row_ids: Vec<String>,
    pub dropped_constant: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizeReport {
    pub n_rows: usize,
    pub n_columns: usize,
    pub dropped_constant: Vec<String>,
}

fn mean_and_sd(col: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = col.clone().sum::<f64>() / n as f64;
    let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Centres and scales each purchase column (population standard deviation)
/// and attaches the response for every matrix row.
pub fn standardize(p_matrix: &PurchaseMatrix, responses: &BTreeMap<String, f64>) -> Result<DesignMatrix> {
    let n = p_matrix.nrows();
    if n < 2 {
        return Err(Error::invalid("design needs at least 2 rows"));
    }
    let y = p_matrix
        .row_ids()
        .iter()
        .map(|id| {
            responses
                .get(id)
                .copied()
                .ok_or_else(|| Error::IdMismatch(format!("no response for row `{id}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    standardize_dense(
        &p_matrix.to_dense(),
        DVector::from_vec(y),
        p_matrix.row_ids().to_vec(),
        p_matrix.col_ids().to_vec(),
    )
}

pub fn standardize_dense(
    raw: &DMatrix<f64>,
    y: DVector<f64>,
    row_ids: Vec<String>,
    col_ids: Vec<String>,
) -> Result<DesignMatrix> {
    let n = raw.nrows();
    if n < 2 {
        return Err(Error::invalid("design needs at least 2 rows"));
    }
    if y.len() != n || col_ids.len() != raw.ncols() || row_ids.len() != n {
        return Err(Error::Dimension("design ids/response do not match matrix".into()));
    }
    if raw.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design".into()));
    }
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for (j, id) in col_ids.iter().enumerate() {
        let col = raw.column(j);
        let (mean, sd) = mean_and_sd(col.iter().copied(), n);
        // relative guard: a column of identical values can pick up rounding noise
        if sd <= 1e-12 * mean.abs().max(1.0) {
            dropped.push(id.clone());
        } else {
            keep.push(j);
            means.push(mean);
            scales.push(sd);
        }
    }
    let mut x = DMatrix::zeros(n, keep.len());
    for (k, &j) in keep.iter().enumerate() {
        for i in 0..n {
            x[(i, k)] = (raw[(i, j)] - means[k]) / scales[k];
        }
    }
    Ok(DesignMatrix {
        x,
        y,
        column_means: means,
        column_scales: scales,
        col_ids: keep.iter().map(|&j| col_ids[j].clone()).collect(),
        row_ids,
        dropped_constant: dropped,
    })
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    /// Copies the given rows (no re-standardization).
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        let x = DMatrix::from_fn(rows.len(), self.ncols(), |i, j| self.x[(rows[i], j)]);
        let y = DVector::from_fn(rows.len(), |i, _| self.y[rows[i]]);
        DesignMatrix {
            x,
            y,
            column_means: self.column_means.clone(),
            column_scales: self.column_scales.clone(),
            col_ids: self.col_ids.clone(),
            row_ids: rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
            dropped_constant: self.dropped_constant.clone(),
        }
    }

    pub fn report(&self) -> StandardizeReport {
        StandardizeReport {
            n_rows: self.nrows(),
            n_columns: self.ncols(),
            dropped_constant: self.dropped_constant.clone(),
        }
    }
}
