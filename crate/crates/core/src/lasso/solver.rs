use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::DesignMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Converged when a full sweep changes no coefficient by more than this.
    pub tol: f64,
    /// Cap on coordinate sweeps (full and active-set sweeps both count).
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 10_000,
        }
    }
}

/// A fitted LASSO model for
/// `(1/2n) ||y - b0 - X b||² + alpha ||b||₁` with an unpenalised intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub alpha: f64,
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub col_ids: Vec<String>,
    pub n_iter: usize,
    pub max_coord_delta: f64,
    pub converged: bool,
    /// Objective after every sweep.
    pub objective_trace: Vec<f64>,
}

impl LassoModel {
    pub fn support(&self) -> Vec<usize> {
        (0..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect()
    }

    pub fn nnz(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }

    pub fn predict_row(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        self.intercept
            + self
                .beta
                .iter()
                .enumerate()
                .filter(|(_, b)| **b != 0.0)
                .map(|(j, b)| b * x[(row, j)])
                .sum::<f64>()
    }
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Smallest alpha at which every coefficient is zero: `max_j |x_jᵀ(y - ȳ)| / n`.
pub fn alpha_max(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = x.nrows() as f64;
    let ybar = y.mean();
    let xbar: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    x.column_iter()
        .enumerate()
        .map(|(j, c)| {
            c.iter()
                .zip(y.iter())
                .map(|(xi, yi)| (xi - xbar[j]) * (yi - ybar))
                .sum::<f64>()
                .abs()
                / n
        })
        .fold(0.0, f64::max)
}

pub(crate) struct Centered {
    x: DMatrix<f64>,
    y: DVector<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
    /// ||x_j||² / n of the centred columns.
    col_sq: Vec<f64>,
}

impl Centered {
    pub(crate) fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "x has {} rows, y has {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::invalid("empty design"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design".into()));
        }
        let n = x.nrows() as f64;
        let x_mean: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
        let y_mean = y.mean();
        let mut xc = x.clone();
        for (j, mut col) in xc.column_iter_mut().enumerate() {
            col.add_scalar_mut(-x_mean[j]);
        }
        let col_sq = xc.column_iter().map(|c| c.norm_squared() / n).collect();
        Ok(Self {
            x: xc,
            y: y.add_scalar(-y_mean),
            x_mean,
            y_mean,
            col_sq,
        })
    }
}

fn objective(residual: &DVector<f64>, beta: &[f64], alpha: f64) -> f64 {
    let n = residual.len() as f64;
    residual.norm_squared() / (2.0 * n) + alpha * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Cyclic coordinate descent with exact soft-threshold updates and an
/// active-set inner loop. `warm` seeds the coefficients.
pub(crate) fn coordinate_descent(
    data: &Centered,
    alpha: f64,
    cfg: &SolverConfig,
    warm: Option<&[f64]>,
) -> LassoModel {
    let n = data.x.nrows() as f64;
    let p = data.x.ncols();
    let mut beta = warm.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p]);
    let mut residual = data.y.clone();
    for (j, b) in beta.iter().enumerate() {
        if *b != 0.0 {
            residual.axpy(-b, &data.x.column(j), 1.0);
        }
    }
    let mut trace = vec![objective(&residual, &beta, alpha)];

    // at or above the full-shrinkage threshold the zero vector is optimal
    let threshold = (0..p)
        .map(|j| data.x.column(j).dot(&data.y).abs() / n)
        .fold(0.0, f64::max);
    if alpha >= threshold * (1.0 - 1e-12) {
        beta.iter_mut().for_each(|b| *b = 0.0);
        trace.push(objective(&data.y, &beta, alpha));
        return LassoModel {
            alpha,
            intercept: data.y_mean,
            beta,
            col_ids: Vec::new(),
            n_iter: 1,
            max_coord_delta: 0.0,
            converged: true,
            objective_trace: trace,
        };
    }

    let update = |j: usize, beta: &mut [f64], residual: &mut DVector<f64>| -> f64 {
        let sq = data.col_sq[j];
        if sq == 0.0 {
            let old = beta[j];
            if old != 0.0 {
                beta[j] = 0.0;
            }
            return old.abs();
        }
        let col = data.x.column(j);
        let old = beta[j];
        let rho = col.dot(residual) / n + sq * old;
        let new = soft_threshold(rho, alpha) / sq;
        if new != old {
            residual.axpy(old - new, &col, 1.0);
            beta[j] = new;
        }
        (new - old).abs()
    };

    let mut n_iter = 0;
    let mut delta = f64::INFINITY;
    let mut converged = false;
    while n_iter < cfg.max_iter {
        delta = (0..p).fold(0.0, |m, j| f64::max(m, update(j, &mut beta, &mut residual)));
        n_iter += 1;
        trace.push(objective(&residual, &beta, alpha));
        if delta < cfg.tol {
            converged = true;
            break;
        }
        let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        while n_iter < cfg.max_iter {
            let d = active
                .iter()
                .fold(0.0, |m, &j| f64::max(m, update(j, &mut beta, &mut residual)));
            n_iter += 1;
            trace.push(objective(&residual, &beta, alpha));
            if d < cfg.tol {
                break;
            }
        }
    }

    let intercept = data.y_mean
        - beta
            .iter()
            .zip(&data.x_mean)
            .map(|(b, m)| b * m)
            .sum::<f64>();
    LassoModel {
        alpha,
        intercept,
        beta,
        col_ids: Vec::new(),
        n_iter,
        max_coord_delta: delta,
        converged,
        objective_trace: trace,
    }
}

/// Fits the LASSO on a design by cyclic coordinate descent.
///
/// On a standardized design the intercept equals `mean(y)`. Hitting
/// `max_iter` is reported through `converged`, not as an error.
pub fn fit_lasso(design: &DesignMatrix, alpha: f64, cfg: &SolverConfig) -> Result<LassoModel> {
    let mut model = fit_lasso_xy(&design.x, &design.y, alpha, cfg)?;
    model.col_ids = design.col_ids.clone();
    Ok(model)
}

pub fn fit_lasso_xy(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<LassoModel> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    let data = Centered::new(x, y)?;
    Ok(coordinate_descent(&data, alpha, cfg, None))
}

/// Fits a descending sequence of alphas with warm starts.
pub(crate) fn fit_path(data: &Centered, alphas: &[f64], cfg: &SolverConfig) -> Vec<LassoModel> {
    let mut warm: Option<Vec<f64>> = None;
    alphas
        .iter()
        .map(|&a| {
            let m = coordinate_descent(data, a, cfg, warm.as_deref());
            warm = Some(m.beta.clone());
            m
        })
        .collect()
}

/// Largest violation of the LASSO optimality conditions, computed from
/// scratch: for `b_j != 0`, `|x_jᵀr/n - alpha sign(b_j)|`; otherwise
/// `max(0, |x_jᵀr/n| - alpha)`.
pub fn kkt_violation(x: &DMatrix<f64>, y: &DVector<f64>, model: &LassoModel) -> f64 {
    let n = x.nrows() as f64;
    let fitted = DVector::from_fn(x.nrows(), |i, _| model.predict_row(x, i));
    let r = y - fitted;
    (0..x.ncols())
        .map(|j| {
            let g = x.column(j).dot(&r) / n;
            let b = model.beta[j];
            if b != 0.0 {
                (g - model.alpha * b.signum()).abs()
            } else {
                (g.abs() - model.alpha).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn full_shrinkage_above_alpha_max() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -1.0, -1.0, 1.0, 1.0, 1.0, -1.0, -1.0]);
        let y = DVector::from_vec(vec![3.0, 1.0, 2.5, 0.5]);
        let amax = alpha_max(&x, &y);
        let m = fit_lasso_xy(&x, &y, amax * 1.000001, &SolverConfig::default()).unwrap();
        assert!(m.beta.iter().all(|b| *b == 0.0));
        assert!((m.intercept - y.mean()).abs() < 1e-15);
        let m = fit_lasso_xy(&x, &y, amax * 0.9, &SolverConfig::default()).unwrap();
        assert_eq!(m.nnz(), 1);
    }

    #[test]
    fn bad_alpha_and_non_finite_rejected() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert!(fit_lasso_xy(&x, &y, 0.0, &SolverConfig::default()).is_err());
        let bad = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(matches!(
            fit_lasso_xy(&bad, &y, 0.1, &SolverConfig::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn max_iter_is_reported_not_fatal() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.9, 2.0, 2.1, 3.0, 2.9]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let cfg = SolverConfig { tol: 1e-15, max_iter: 2 };
        let m = fit_lasso_xy(&x, &y, 1e-3, &cfg).unwrap();
        assert_eq!(m.n_iter, 2);
        assert!(!m.converged);
    }
}
