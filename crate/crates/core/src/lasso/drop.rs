use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{DesignMatrix, LassoModel};
use crate::error::{Error, Result};

/// Penalty added to the normal equations when a refit is singular.
pub const RIDGE_FALLBACK: f64 = 1e-8;

/// Ordinary least squares with an intercept on a subset of columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub features: Vec<usize>,
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub ridge: bool,
}

impl OlsFit {
    pub fn predict_row(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        self.intercept
            + self
                .features
                .iter()
                .zip(&self.coef)
                .map(|(&j, c)| c * x[(row, j)])
                .sum::<f64>()
    }
}

/// Solves the centred normal equations by Cholesky; falls back to a tiny
/// ridge penalty when the Gram matrix is not numerically positive definite.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>, rows: &[usize], features: &[usize]) -> Result<OlsFit> {
    if rows.is_empty() {
        return Err(Error::invalid("least-squares refit needs rows"));
    }
    let n = rows.len() as f64;
    let y_mean = rows.iter().map(|&i| y[i]).sum::<f64>() / n;
    if features.is_empty() {
        return Ok(OlsFit {
            features: Vec::new(),
            coef: Vec::new(),
            intercept: y_mean,
            ridge: false,
        });
    }
    let p = features.len();
    let means: Vec<f64> = features
        .iter()
        .map(|&j| rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / n)
        .collect();
    let xc = DMatrix::from_fn(rows.len(), p, |i, k| x[(rows[i], features[k])] - means[k]);
    let yc = DVector::from_fn(rows.len(), |i, _| y[rows[i]] - y_mean);
    let gram = xc.tr_mul(&xc);
    let rhs = xc.tr_mul(&yc);

    let max_diag = gram.diagonal().max();
    let well_posed = |g: &DMatrix<f64>| {
        g.clone().cholesky().filter(|c| {
            let l = c.l_dirty();
            (0..p).all(|k| l[(k, k)] * l[(k, k)] > 1e-10 * max_diag.max(f64::MIN_POSITIVE))
        })
    };
    let (chol, ridge) = match well_posed(&gram) {
        Some(c) => (c, false),
        None => {
            let mut g = gram.clone();
            for k in 0..p {
                g[(k, k)] += RIDGE_FALLBACK;
            }
            let c = g
                .cholesky()
                .ok_or_else(|| Error::Numerical("ridge fallback refit failed".into()))?;
            (c, true)
        }
    };
    let coef = chol.solve(&rhs);
    let intercept = y_mean - coef.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
    Ok(OlsFit {
        features: features.to_vec(),
        coef: coef.iter().copied().collect(),
        intercept,
        ridge,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_features: usize,
    pub holdout_mse: f64,
    /// The refit at this step needed the ridge fallback.
    pub ridge: bool,
}

/// Holdout error as features are dropped one at a time from the LASSO support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropExperimentCurve {
    /// `n_features` strictly decreasing, ending at 0.
    pub points: Vec<CurvePoint>,
    /// LASSO support as (stock code, LASSO coefficient), in column order.
    pub support: Vec<(String, f64)>,
    /// Stock codes in the order they were dropped.
    pub drop_order: Vec<String>,
}

impl DropExperimentCurve {
    /// Features still present when `n` remain.
    pub fn survivors(&self, n: usize) -> Vec<(String, f64)> {
        let dropped = self.support.len().saturating_sub(n);
        let gone: std::collections::BTreeSet<&str> =
            self.drop_order[..dropped].iter().map(String::as_str).collect();
        self.support
            .iter()
            .filter(|(id, _)| !gone.contains(id.as_str()))
            .cloned()
            .collect()
    }
}

pub fn holdout_mse(fit: &OlsFit, x: &DMatrix<f64>, y: &DVector<f64>, holdout: &[usize]) -> f64 {
    holdout
        .iter()
        .map(|&i| (y[i] - fit.predict_row(x, i)).powi(2))
        .sum::<f64>()
        / holdout.len() as f64
}

/// Starting from the LASSO support, refits least squares on the training
/// rows, records the holdout MSE, then drops the feature whose refit
/// coefficient has the smallest magnitude (ties: larger stock code), until
/// no feature is left.
pub fn drop_experiment(
    design: &DesignMatrix,
    model: &LassoModel,
    holdout: &[usize],
) -> Result<DropExperimentCurve> {
    let n = design.nrows();
    if holdout.is_empty() {
        return Err(Error::invalid("holdout set is empty"));
    }
    let mut is_holdout = vec![false; n];
    for &i in holdout {
        if i >= n {
            return Err(Error::invalid(format!("holdout row {i} out of range")));
        }
        is_holdout[i] = true;
    }
    let train: Vec<usize> = (0..n).filter(|&i| !is_holdout[i]).collect();
    if train.is_empty() {
        return Err(Error::invalid("no training rows outside the holdout"));
    }
    let mut active = model.support();
    if active.is_empty() {
        return Err(Error::invalid("LASSO model has no nonzero coefficient"));
    }
    let support: Vec<(String, f64)> = active
        .iter()
        .map(|&j| (design.col_ids[j].clone(), model.beta[j]))
        .collect();

    let mut points = Vec::with_capacity(active.len() + 1);
    let mut drop_order = Vec::with_capacity(active.len());
    loop {
        let fit = fit_ols(&design.x, &design.y, &train, &active)?;
        points.push(CurvePoint {
            n_features: active.len(),
            holdout_mse: holdout_mse(&fit, &design.x, &design.y, holdout),
            ridge: fit.ridge,
        });
        if active.is_empty() {
            break;
        }
        let weakest = (0..active.len())
            .min_by(|&a, &b| {
                fit.coef[a]
                    .abs()
                    .partial_cmp(&fit.coef[b].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| design.col_ids[active[b]].cmp(&design.col_ids[active[a]]))
            })
            .expect("active set non-empty");
        drop_order.push(design.col_ids[active[weakest]].clone());
        active.remove(weakest);
    }
    Ok(DropExperimentCurve {
        points,
        support,
        drop_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_fit() {
        // y = 1 + 2 x0 - x1
        let x = DMatrix::from_row_slice(5, 2, &[0.0, 1.0, 1.0, 0.0, 2.0, 3.0, 3.0, 1.0, 4.0, 5.0]);
        let y = DVector::from_fn(5, |i, _| 1.0 + 2.0 * x[(i, 0)] - x[(i, 1)]);
        let fit = fit_ols(&x, &y, &[0, 1, 2, 3, 4], &[0, 1]).unwrap();
        assert!(!fit.ridge);
        assert!((fit.intercept - 1.0).abs() < 1e-10);
        assert!((fit.coef[0] - 2.0).abs() < 1e-10);
        assert!((fit.coef[1] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn duplicate_columns_trigger_ridge() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 5.0, 5.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 5.0]);
        let fit = fit_ols(&x, &y, &[0, 1, 2, 3], &[0, 1]).unwrap();
        assert!(fit.ridge);
        assert!((fit.coef[0] - 0.5).abs() < 1e-4 && (fit.coef[1] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn single_feature_support_gives_two_points() {
        let x = DMatrix::from_row_slice(6, 2, &[1.0, 0.0, -1.0, 1.0, 2.0, 0.5, -2.0, 0.1, 0.5, 0.0, -0.5, 0.2]);
        let y = DVector::from_fn(6, |i, _| 3.0 * x[(i, 0)]);
        let design = DesignMatrix {
            x,
            y,
            column_means: vec![0.0; 2],
            column_scales: vec![1.0; 2],
            col_ids: vec!["a".into(), "b".into()],
            row_ids: (0..6).map(|i| i.to_string()).collect(),
            dropped_constant: vec![],
        };
        let model = LassoModel {
            alpha: 0.1,
            intercept: 0.0,
            beta: vec![2.9, 0.0],
            col_ids: design.col_ids.clone(),
            n_iter: 1,
            max_coord_delta: 0.0,
            converged: true,
            objective_trace: vec![],
        };
        let curve = drop_experiment(&design, &model, &[4, 5]).unwrap();
        let n: Vec<usize> = curve.points.iter().map(|p| p.n_features).collect();
        assert_eq!(n, vec![1, 0]);
        assert!(curve.points[0].holdout_mse < 1e-20);
        assert_eq!(curve.drop_order, vec!["a".to_string()]);
        assert_eq!(curve.survivors(1), vec![("a".to_string(), 2.9)]);
    }
}
