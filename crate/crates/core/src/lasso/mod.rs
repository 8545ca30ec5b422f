//! Value-driven item selection: LASSO by coordinate descent, cross-validated
//! regularization, a feature-drop experiment on a holdout set, and residual
//! diagnostics.
//!
//! The objective is `(1/2n) ||y - b0 - X b||² + alpha ||b||₁` on predictors
//! standardized to mean 0 and unit population variance; the intercept is not
//! penalised.

mod cv;
mod design;
mod diagnostics;
mod drop;
mod select;
mod solver;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use cv::{cross_validate_alpha, default_alpha_grid, fold_assignment, log_grid, CvPoint, CvResult};
pub use design::{standardize, standardize_dense, DesignMatrix, StandardizeReport};
pub use diagnostics::{
    diagnostics_from_pairs, max_pp_deviation, pp_points, residual_diagnostics, standardize_residuals,
    DiagnosticsReport, PpPoint, PredictedActual, RowPredictor,
};
pub use drop::{drop_experiment, fit_ols, holdout_mse, CurvePoint, DropExperimentCurve, OlsFit, RIDGE_FALLBACK};
pub use select::{select_features, FeatureRanking, RankedFeature, SelectionRule};
pub use solver::{alpha_max, fit_lasso, fit_lasso_xy, kkt_violation, soft_threshold, LassoModel, SolverConfig};

/// Seeded holdout rows: `round(fraction * n)` rows (at least 1, at most
/// `n - 1`), returned sorted.
pub fn holdout_rows(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let size = ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut rows = order[..size.min(n)].to_vec();
    rows.sort_unstable();
    rows
}

/// Rows not in `holdout`.
pub fn complement(n: usize, holdout: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in holdout {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}
