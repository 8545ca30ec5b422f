//! Regularised non-negative matrix factorization `P′ ≈ W·H` of the
//! customer × item matrix, masked fitting for hyperparameter search by
//! imputation, and dictionary profiling.
//!
//! The objective is
//! `½‖M∘(P′ − WH)‖²_F + α·ρ·(‖W‖₁ + ‖H‖₁) + ½·α·(1 − ρ)·(‖W‖²_F + ‖H‖²_F)`
//! where `M` is the 0/1 observation mask, `α` is `alpha_m` and `ρ` is
//! `l1_ratio`. The penalties are not rescaled by the matrix dimensions.

mod dictionary;
mod fit;
mod grid;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PurchaseMatrix;

pub use dictionary::{normalize_dictionary, top_items_per_element, ElementProfile, NormalizedDictionary};
pub use fit::{fit_nmf, fit_nmf_dense};
pub use grid::{grid_search, GridCell, GridSearchResult, GridSpec};

/// Share of stored entries held out for imputation scoring.
pub const HOLDOUT_FRACTION: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmfInit {
    RandomUniform,
    Nndsvd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmfConfig {
    pub k: usize,
    pub alpha_m: f64,
    pub l1_ratio: f64,
    /// Stop when the relative objective decrease of a sweep falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub init: NmfInit,
    /// Random initialisations tried (seeds `seed`, `seed + 1`, ...); the fit
    /// with the lowest final objective is kept. NNDSVD runs once.
    pub n_init: usize,
}

impl Default for NmfConfig {
    fn default() -> Self {
        Self {
            k: 5,
            alpha_m: 1.0,
            l1_ratio: 0.1,
            tol: 1e-6,
            max_iter: 500,
            seed: 0,
            init: NmfInit::RandomUniform,
            n_init: 3,
        }
    }
}

impl NmfConfig {
    pub(crate) fn validate(&self, n: usize, m: usize) -> Result<()> {
        if self.k == 0 || self.k > n.min(m) {
            return Err(Error::invalid(format!(
                "k = {} must lie in 1..={} for a {n}x{m} matrix",
                self.k,
                n.min(m)
            )));
        }
        if !(self.alpha_m >= 0.0) || !self.alpha_m.is_finite() {
            return Err(Error::invalid(format!("alpha_m = {} must be >= 0", self.alpha_m)));
        }
        if !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(Error::invalid(format!("l1_ratio = {} must lie in [0, 1]", self.l1_ratio)));
        }
        if self.n_init == 0 {
            return Err(Error::invalid("n_init must be >= 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("tol must be >= 0"));
        }
        Ok(())
    }

    /// (ℓ1 weight, ℓ2 weight).
    pub fn penalties(&self) -> (f64, f64) {
        (self.alpha_m * self.l1_ratio, self.alpha_m * (1.0 - self.l1_ratio))
    }
}

/// Fitted factors with the ids of the matrix they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    /// n × k customer affinities.
    pub w: DMatrix<f64>,
    /// k × m dictionary.
    pub h: DMatrix<f64>,
    /// Objective after initialization and after every sweep.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub n_iter: usize,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
}

impl Factorization {
    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    pub fn reconstruction(&self) -> DMatrix<f64> {
        &self.w * &self.h
    }

    /// Reconstructed purchase row of customer `i`: `Σ_k w_ik · h_k`.
    pub fn reconstruct_row(&self, i: usize) -> Vec<f64> {
        (0..self.h.ncols())
            .map(|j| (0..self.k()).map(|k| self.w[(i, k)] * self.h[(k, j)]).sum())
            .collect()
    }

    /// Fraction of exactly-zero entries in H.
    pub fn h_sparsity(&self) -> f64 {
        let len = self.h.len().max(1) as f64;
        self.h.iter().filter(|v| **v == 0.0).count() as f64 / len
    }
}

/// Held-out positions, drawn uniformly from the stored (positive) entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutMask {
    /// (row, col) positions in row-major order.
    pub held_out: Vec<(usize, usize)>,
    pub fraction: f64,
}

impl HoldoutMask {
    pub fn sample(p: &PurchaseMatrix, fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::invalid(format!("holdout fraction {fraction} must lie in (0, 1)")));
        }
        let stored: Vec<(usize, usize)> = p.iter().map(|(r, c, _)| (r, c)).collect();
        let size = (fraction * stored.len() as f64).round() as usize;
        if size == 0 {
            return Err(Error::invalid("matrix has too few stored entries to hold any out"));
        }
        let mut picks = sample(&mut ChaCha8Rng::seed_from_u64(seed), stored.len(), size).into_vec();
        picks.sort_unstable();
        Ok(Self {
            held_out: picks.into_iter().map(|i| stored[i]).collect(),
            fraction,
        })
    }

    /// 0/1 observation weights for an `n × m` matrix.
    pub fn weights(&self, n: usize, m: usize) -> DMatrix<f64> {
        let mut w = DMatrix::from_element(n, m, 1.0);
        for &(i, j) in &self.held_out {
            w[(i, j)] = 0.0;
        }
        w
    }
}

fn reg_terms(w: &DMatrix<f64>, h: &DMatrix<f64>, cfg: &NmfConfig) -> f64 {
    let (l1, l2) = cfg.penalties();
    let abs = w.iter().chain(h.iter()).map(|v| v.abs()).sum::<f64>();
    let sq = w.norm_squared() + h.norm_squared();
    l1 * abs + 0.5 * l2 * sq
}

/// Full regularised objective (no mask).
pub fn objective_value(p: &PurchaseMatrix, f: &Factorization, cfg: &NmfConfig) -> Result<f64> {
    objective_dense(&p.to_dense(), &f.w, &f.h, cfg, None)
}

pub(crate) fn objective_dense(
    p: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    cfg: &NmfConfig,
    weights: Option<&DMatrix<f64>>,
) -> Result<f64> {
    if w.nrows() != p.nrows() || h.ncols() != p.ncols() || w.ncols() != h.nrows() {
        return Err(Error::Dimension(format!(
            "W {}x{} and H {}x{} do not factor a {}x{} matrix",
            w.nrows(),
            w.ncols(),
            h.nrows(),
            h.ncols(),
            p.nrows(),
            p.ncols()
        )));
    }
    let mut resid = p - w * h;
    if let Some(m) = weights {
        resid.component_mul_assign(m);
    }
    Ok(0.5 * resid.norm_squared() + reg_terms(w, h, cfg))
}

/// Mean squared error of the reconstruction over the held-out positions.
pub fn imputation_mse(p: &PurchaseMatrix, f: &Factorization, mask: &HoldoutMask) -> Result<f64> {
    if mask.held_out.is_empty() {
        return Err(Error::invalid("holdout mask is empty"));
    }
    let mut sum = 0.0;
    for &(i, j) in &mask.held_out {
        if i >= f.w.nrows() || j >= f.h.ncols() {
            return Err(Error::Dimension(format!("held-out position ({i}, {j}) outside the factors")));
        }
        let pred: f64 = (0..f.k()).map(|k| f.w[(i, k)] * f.h[(k, j)]).sum();
        sum += (p.get(i, j) - pred).powi(2);
    }
    Ok(sum / mask.held_out.len() as f64)
}
