use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit::fit_nmf_dense, imputation_mse, HoldoutMask, NmfConfig, HOLDOUT_FRACTION};
use crate::error::{Error, Result};
use crate::ingest::PurchaseMatrix;

/// Hyperparameter grid for the imputation search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub k_values: Vec<usize>,
    pub alpha_values: Vec<f64>,
    pub l1_values: Vec<f64>,
    /// MSEs within `tie_tolerance × mean(held-out value²)` of the minimum
    /// count as ties.
    pub tie_tolerance: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            k_values: (2..=20).collect(),
            alpha_values: vec![0.0, 0.1, 0.5, 1.0, 2.0],
            l1_values: vec![0.0, 0.1, 0.5, 0.9, 1.0],
            tie_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub k: usize,
    pub alpha_m: f64,
    pub l1_ratio: f64,
    /// `None` when the fit failed.
    pub imputation_mse: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub table: Vec<GridCell>,
    pub best: NmfConfig,
    pub best_mse: f64,
    pub mask: HoldoutMask,
}

/// Fits every grid cell on one shared holdout mask and scores the held-out
/// entries. Cells run in parallel; a failing cell is recorded and skipped.
/// The best cell has the lowest imputation MSE, ties going to the smaller
/// k, then the larger alpha.
pub fn grid_search(p: &PurchaseMatrix, grid: &GridSpec, seed: u64, base: &NmfConfig) -> Result<GridSearchResult> {
    if grid.k_values.is_empty() || grid.alpha_values.is_empty() || grid.l1_values.is_empty() {
        return Err(Error::invalid("NMF grid has an empty axis"));
    }
    let mask = HoldoutMask::sample(p, HOLDOUT_FRACTION, seed)?;
    let dense = p.to_dense();
    let mut cells = Vec::new();
    for &k in &grid.k_values {
        for &alpha_m in &grid.alpha_values {
            for &l1_ratio in &grid.l1_values {
                cells.push(NmfConfig {
                    k,
                    alpha_m,
                    l1_ratio,
                    seed,
                    ..*base
                });
            }
        }
    }
    let table: Vec<GridCell> = cells
        .par_iter()
        .map(|cfg| {
            let scored = fit_nmf_dense(&dense, cfg, Some(&mask))
                .and_then(|f| imputation_mse(p, &f, &mask).map(|mse| (mse, f.converged)));
            match scored {
                Ok((mse, converged)) => GridCell {
                    k: cfg.k,
                    alpha_m: cfg.alpha_m,
                    l1_ratio: cfg.l1_ratio,
                    imputation_mse: Some(mse),
                    converged,
                    error: None,
                },
                Err(e) => GridCell {
                    k: cfg.k,
                    alpha_m: cfg.alpha_m,
                    l1_ratio: cfg.l1_ratio,
                    imputation_mse: None,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let scored: Vec<(usize, f64)> = table
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.imputation_mse.filter(|v| v.is_finite()).map(|v| (i, v)))
        .collect();
    let min = scored
        .iter()
        .map(|s| s.1)
        .reduce(f64::min)
        .ok_or_else(|| Error::Numerical("every NMF grid cell failed".into()))?;
    let scale = mask.held_out.iter().map(|&(i, j)| p.get(i, j).powi(2)).sum::<f64>()
        / mask.held_out.len() as f64;
    let cutoff = min + grid.tie_tolerance * scale;
    let (best_idx, best_mse) = scored
        .into_iter()
        .filter(|s| s.1 <= cutoff)
        .min_by(|(a, _), (b, _)| {
            table[*a]
                .k
                .cmp(&table[*b].k)
                .then(table[*b].alpha_m.total_cmp(&table[*a].alpha_m))
                .then(a.cmp(b))
        })
        .expect("the minimum is within the cutoff");
    Ok(GridSearchResult {
        best: cells[best_idx],
        best_mse,
        table,
        mask,
    })
}
