use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{objective_dense, Factorization, HoldoutMask, NmfConfig, NmfInit};
use crate::error::{Error, Result};
use crate::ingest::PurchaseMatrix;

/// Fits `P′ ≈ WH` by HALS coordinate descent. With a mask, held-out
/// positions get zero weight in the data term and never influence the fit.
pub fn fit_nmf(p: &PurchaseMatrix, cfg: &NmfConfig, mask: Option<&HoldoutMask>) -> Result<Factorization> {
    let mut f = fit_nmf_dense(&p.to_dense(), cfg, mask)?;
    f.row_ids = p.row_ids().to_vec();
    f.col_ids = p.col_ids().to_vec();
    Ok(f)
}

pub fn fit_nmf_dense(p: &DMatrix<f64>, cfg: &NmfConfig, mask: Option<&HoldoutMask>) -> Result<Factorization> {
    let (n, m) = p.shape();
    cfg.validate(n, m)?;
    if let Some((idx, v)) = p.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!(
            "NMF input must be finite and non-negative; entry ({}, {}) = {v}",
            idx % n,
            idx / n
        )));
    }
    let weights = match mask {
        Some(mk) => {
            if let Some(&(i, j)) = mk.held_out.iter().find(|&&(i, j)| i >= n || j >= m) {
                return Err(Error::Dimension(format!("held-out position ({i}, {j}) outside {n}x{m}")));
            }
            Some(mk.weights(n, m))
        }
        None => None,
    };
    // held-out values are replaced by zero before anything reads them
    let observed = match &weights {
        Some(wt) => p.component_mul(wt),
        None => p.clone(),
    };
    let starts = match cfg.init {
        NmfInit::RandomUniform => cfg.n_init,
        NmfInit::Nndsvd => 1,
    };
    let mut best: Option<Factorization> = None;
    for r in 0..starts {
        let (w, h) = match cfg.init {
            NmfInit::RandomUniform => random_init(&observed, weights.as_ref(), cfg, cfg.seed.wrapping_add(r as u64)),
            NmfInit::Nndsvd => nndsvd_init(&observed, cfg.k),
        };
        let f = run_hals(&observed, weights.as_ref(), w, h, cfg)?;
        let better = best
            .as_ref()
            .map_or(true, |b| f.objective_trace.last() < b.objective_trace.last());
        if better {
            best = Some(f);
        }
    }
    Ok(best.expect("at least one start"))
}

fn run_hals(
    observed: &DMatrix<f64>,
    weights: Option<&DMatrix<f64>>,
    mut w: DMatrix<f64>,
    mut h: DMatrix<f64>,
    cfg: &NmfConfig,
) -> Result<Factorization> {
    let (n, m) = observed.shape();
    let mut trace = vec![objective_dense(observed, &w, &h, cfg, weights)?];
    let mut converged = false;
    let mut n_iter = 0;
    while n_iter < cfg.max_iter {
        sweep(observed, weights, &mut w, &mut h, cfg);
        n_iter += 1;
        let f = objective_dense(observed, &w, &h, cfg, weights)?;
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(f);
        if f <= f64::MIN_POSITIVE || (prev - f) <= cfg.tol * prev.abs() {
            converged = true;
            break;
        }
    }
    Ok(Factorization {
        w,
        h,
        objective_trace: trace,
        converged,
        n_iter,
        row_ids: (0..n).map(|i| i.to_string()).collect(),
        col_ids: (0..m).map(|j| j.to_string()).collect(),
    })
}

fn random_init(
    observed: &DMatrix<f64>,
    weights: Option<&DMatrix<f64>>,
    cfg: &NmfConfig,
    seed: u64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = observed.shape();
    let count = weights.map_or((n * m) as f64, |wt| wt.sum());
    let mean = if count > 0.0 { observed.sum() / count } else { 0.0 };
    let scale = (mean / cfg.k as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DMatrix::zeros(n, cfg.k);
    for i in 0..n {
        for k in 0..cfg.k {
            w[(i, k)] = scale * rng.gen::<f64>();
        }
    }
    let mut h = DMatrix::zeros(cfg.k, m);
    for k in 0..cfg.k {
        for j in 0..m {
            h[(k, j)] = scale * rng.gen::<f64>();
        }
    }
    (w, h)
}

/// Non-negative double SVD initialisation (zeros kept as zeros).
fn nndsvd_init(observed: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = observed.shape();
    let svd = observed.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let mut w = DMatrix::zeros(n, k);
    let mut h = DMatrix::zeros(k, m);
    for (c, &s_idx) in order.iter().take(k).enumerate() {
        let s = svd.singular_values[s_idx];
        let x: Vec<f64> = u.column(s_idx).iter().copied().collect();
        let y: Vec<f64> = vt.row(s_idx).iter().copied().collect();
        let pos = |v: &[f64]| v.iter().map(|t| t.max(0.0)).collect::<Vec<_>>();
        let neg = |v: &[f64]| v.iter().map(|t| (-t).max(0.0)).collect::<Vec<_>>();
        let norm = |v: &[f64]| v.iter().map(|t| t * t).sum::<f64>().sqrt();
        let (xp, xn, yp, yn) = (pos(&x), neg(&x), pos(&y), neg(&y));
        let (xpn, xnn, ypn, ynn) = (norm(&xp), norm(&xn), norm(&yp), norm(&yn));
        let (a, b, na, nb) = if xpn * ypn >= xnn * ynn {
            (xp, yp, xpn, ypn)
        } else {
            (xn, yn, xnn, ynn)
        };
        let sigma = na * nb;
        if na == 0.0 || nb == 0.0 || sigma == 0.0 {
            continue;
        }
        let lbd = (s * sigma).sqrt();
        for i in 0..n {
            w[(i, c)] = lbd * a[i] / na;
        }
        for j in 0..m {
            h[(c, j)] = lbd * b[j] / nb;
        }
    }
    (w, h)
}

/// One HALS sweep: every column of W, then every row of H, each updated by
/// its exact non-negative minimiser with the other factors fixed.
fn sweep(
    observed: &DMatrix<f64>,
    weights: Option<&DMatrix<f64>>,
    w: &mut DMatrix<f64>,
    h: &mut DMatrix<f64>,
    cfg: &NmfConfig,
) {
    let (n, m) = observed.shape();
    let (l1, l2) = cfg.penalties();
    let mut resid = observed - &*w * &*h;
    if let Some(wt) = weights {
        resid.component_mul_assign(wt);
    }
    let update = |num: f64, den: f64| {
        if den > 0.0 {
            ((num - l1) / den).max(0.0)
        } else {
            0.0
        }
    };

    for k in 0..cfg.k {
        let mut num = vec![0.0; n];
        let mut den = vec![0.0; n];
        for j in 0..m {
            let hkj = h[(k, j)];
            if hkj == 0.0 {
                continue;
            }
            for i in 0..n {
                num[i] += hkj * resid[(i, j)];
                den[i] += weights.map_or(1.0, |wt| wt[(i, j)]) * hkj * hkj;
            }
        }
        for i in 0..n {
            let old = w[(i, k)];
            let new = update(num[i] + old * den[i], den[i] + l2);
            if new != old {
                let delta = new - old;
                for j in 0..m {
                    let hkj = h[(k, j)];
                    if hkj != 0.0 {
                        resid[(i, j)] -= weights.map_or(1.0, |wt| wt[(i, j)]) * delta * hkj;
                    }
                }
                w[(i, k)] = new;
            }
        }
    }

    for k in 0..cfg.k {
        for j in 0..m {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                let wik = w[(i, k)];
                if wik != 0.0 {
                    num += wik * resid[(i, j)];
                    den += weights.map_or(1.0, |wt| wt[(i, j)]) * wik * wik;
                }
            }
            let old = h[(k, j)];
            let new = update(num + old * den, den + l2);
            if new != old {
                let delta = new - old;
                for i in 0..n {
                    let wik = w[(i, k)];
                    if wik != 0.0 {
                        resid[(i, j)] -= weights.map_or(1.0, |wt| wt[(i, j)]) * delta * wik;
                    }
                }
                h[(k, j)] = new;
            }
        }
    }
}
