use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solver::{alpha_max, fit_path, Centered, SolverConfig};
use super::DesignMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub alpha: f64,
    pub mean_mse: f64,
    pub std_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub alpha_best: f64,
    /// Sorted by decreasing alpha.
    pub curve: Vec<CvPoint>,
}

/// `n_points` log-spaced values from `alpha_max` down to `alpha_max * ratio`.
pub fn default_alpha_grid(design: &DesignMatrix, n_points: usize, ratio: f64) -> Vec<f64> {
    let top = alpha_max(&design.x, &design.y);
    log_grid(top, top * ratio, n_points)
}

pub fn log_grid(hi: f64, lo: f64, n_points: usize) -> Vec<f64> {
    match n_points {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let (lh, ll) = (hi.ln(), lo.ln());
            (0..n_points)
                .map(|i| (lh + (ll - lh) * i as f64 / (n_points - 1) as f64).exp())
                .collect()
        }
    }
}

/// Seeded fold labels: a shuffled row order dealt round-robin into `k` folds.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

fn rows_of(x: &DMatrix<f64>, y: &DVector<f64>, rows: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    (
        DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)]),
        DVector::from_fn(rows.len(), |i, _| y[rows[i]]),
    )
}

/// K-fold cross-validation over an alpha grid.
///
/// Each fold fits the whole grid as a warm-started path (largest alpha
/// first); folds run in parallel. The best alpha minimises mean held-out MSE,
/// ties going to the larger alpha.
pub fn cross_validate_alpha(
    design: &DesignMatrix,
    grid: &[f64],
    k: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::invalid("alpha grid is empty"));
    }
    if k < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    if grid.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
        return Err(Error::invalid("alpha grid values must be positive"));
    }
    let n = design.nrows();
    let folds = fold_assignment(n, k, seed);
    for f in 0..k {
        let size = folds.iter().filter(|&&g| g == f).count();
        if size < 2 {
            return Err(Error::invalid(format!(
                "fold {f} has {size} rows; every fold needs at least 2 ({n} rows, {k} folds)"
            )));
        }
    }
    let mut alphas = grid.to_vec();
    alphas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    alphas.dedup();

    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            let (xt, yt) = rows_of(&design.x, &design.y, &train);
            let data = Centered::new(&xt, &yt)?;
            let path = fit_path(&data, &alphas, cfg);
            Ok(path
                .iter()
                .map(|m| {
                    test.iter()
                        .map(|&i| (design.y[i] - m.predict_row(&design.x, i)).powi(2))
                        .sum::<f64>()
                        / test.len() as f64
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let curve: Vec<CvPoint> = alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let errs: Vec<f64> = per_fold.iter().map(|f| f[a]).collect();
            let mean = errs.iter().sum::<f64>() / k as f64;
            let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / k as f64;
            CvPoint {
                alpha,
                mean_mse: mean,
                std_mse: var.sqrt(),
            }
        })
        .collect();
    let best = curve
        .iter()
        .fold(curve[0], |best, p| if p.mean_mse < best.mean_mse { *p } else { best });
    Ok(CvResult {
        alpha_best: best.alpha,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_balanced_and_seeded() {
        let f = fold_assignment(23, 5, 7);
        for k in 0..5 {
            let c = f.iter().filter(|&&g| g == k).count();
            assert!(c == 4 || c == 5);
        }
        assert_eq!(f, fold_assignment(23, 5, 7));
        assert_ne!(f, fold_assignment(23, 5, 8));
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1.0, 1e-4, 5);
        assert_eq!(g.len(), 5);
        assert!((g[0] - 1.0).abs() < 1e-15);
        assert!((g[4] - 1e-4).abs() < 1e-15);
        assert!((g[2] - 1e-2).abs() < 1e-15);
    }
}
