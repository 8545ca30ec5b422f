use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Factorization;

/// Dictionary with unit-length rows and the scales that undo it.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDictionary {
    pub h: DMatrix<f64>,
    /// Original Euclidean norm of each row (1 for all-zero rows).
    pub scales: Vec<f64>,
    /// Rows that were entirely zero and were left unchanged.
    pub zero_rows: Vec<usize>,
}

impl NormalizedDictionary {
    /// Multiplies column `k` of `w` by `scales[k]` so `W′·H′ = W·H`.
    pub fn absorb(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = w.clone();
        for (k, mut col) in out.column_iter_mut().enumerate() {
            col *= self.scales[k];
        }
        out
    }
}

pub fn normalize_dictionary(f: &Factorization) -> NormalizedDictionary {
    let mut h = f.h.clone();
    let mut scales = Vec::with_capacity(h.nrows());
    let mut zero_rows = Vec::new();
    for k in 0..h.nrows() {
        let norm = h.row(k).norm();
        if norm == 0.0 {
            zero_rows.push(k);
            scales.push(1.0);
        } else {
            h.row_mut(k).unscale_mut(norm);
            scales.push(norm);
        }
    }
    NormalizedDictionary { h, scales, zero_rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementProfile {
    pub element: usize,
    /// (item id, weight), heaviest first.
    pub items: Vec<(String, f64)>,
}

/// The `top_n` heaviest items of every dictionary row (ties by column order).
pub fn top_items_per_element(h: &DMatrix<f64>, col_ids: &[String], top_n: usize) -> Vec<ElementProfile> {
    (0..h.nrows())
        .map(|k| {
            let mut cols: Vec<usize> = (0..h.ncols()).collect();
            cols.sort_by(|&a, &b| h[(k, b)].total_cmp(&h[(k, a)]).then(a.cmp(&b)));
            ElementProfile {
                element: k,
                items: cols
                    .into_iter()
                    .take(top_n)
                    .map(|j| (col_ids[j].clone(), h[(k, j)]))
                    .collect(),
            }
        })
        .collect()
}
