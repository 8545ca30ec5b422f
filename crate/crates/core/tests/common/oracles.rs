use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use shoppers_core::cluster::LAMBDA_CAP;

pub fn centred(x: &DMatrix<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mut xc = x.clone();
    for mut c in xc.column_iter_mut() {
        let m = c.mean();
        c.add_scalar_mut(-m);
    }
    (xc, y.add_scalar(-y.mean()))
}

/// Projected gradient on the split `b = u - v`, `u, v >= 0`.
pub fn projected_gradient(x: &DMatrix<f64>, y: &DVector<f64>, alpha: f64, tol: f64) -> Vec<f64> {
    let (xc, yc) = centred(x, y);
    let n = x.nrows() as f64;
    let a = xc.tr_mul(&xc) / n;
    let c = xc.tr_mul(&yc) / n;
    let l = a.clone().symmetric_eigenvalues().max();
    let step = 1.0 / (2.0 * l);
    let p = x.ncols();
    let mut u = DVector::<f64>::zeros(p);
    let mut v = DVector::<f64>::zeros(p);
    for _ in 0..5_000_000 {
        let g = &a * (&u - &v) - &c;
        let nu = (&u - step * (&g).add_scalar(alpha)).map(|t| t.max(0.0));
        let nv = (&v - step * (-&g).add_scalar(alpha)).map(|t| t.max(0.0));
        let change = (&nu - &u).amax().max((&nv - &v).amax());
        u = nu;
        v = nv;
        if change < tol {
            break;
        }
    }
    (u - v).iter().copied().collect()
}

fn dist(p: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    (p.row(a) - p.row(b)).norm()
}

/// Relabels so cluster ids follow first appearance; noise stays −1.
pub fn canonical(labels: &[i64]) -> Vec<i64> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                -1
            } else {
                let next = map.len() as i64;
                *map.entry(l).or_insert(next)
            }
        })
        .collect()
}

/// Independent condensed-tree extraction from the full mutual-reachability
/// matrix, with exhaustive search over every admissible cluster selection.
pub fn reference_labels(p: &DMatrix<f64>, mcs: usize, ms: usize) -> Vec<i64> {
    let n = p.nrows();
    let core: Vec<f64> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist(p, i, j)).collect();
            d.sort_by(f64::total_cmp);
            d[ms - 1]
        })
        .collect();
    let mr = |a: usize, b: usize| dist(p, a, b).max(core[a]).max(core[b]);
    let lam = |d: f64| if d > 0.0 { 1.0 / d } else { LAMBDA_CAP };

    struct Node {
        members: Vec<usize>,
        parent: Option<usize>,
        birth: f64,
        death: f64,
    }
    let mut nodes = vec![Node { members: (0..n).collect(), parent: None, birth: 0.0, death: 0.0 }];
    let mut exit = vec![(0usize, 0.0f64); n];
    let mut work = vec![(0usize, f64::INFINITY)];
    while let Some((id, below)) = work.pop() {
        let mut cur = nodes[id].members.clone();
        let mut levels: Vec<f64> = cur
            .iter()
            .flat_map(|&a| cur.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
            .map(|(a, b)| mr(a, b))
            .filter(|&d| d < below)
            .collect();
        levels.sort_by(|a, b| b.total_cmp(a));
        levels.dedup();
        for d in levels {
            // components of {mr < d} restricted to cur
            let mut comp: Vec<Option<usize>> = vec![None; n];
            let mut groups: Vec<Vec<usize>> = Vec::new();
            for &s in &cur {
                if comp[s].is_some() {
                    continue;
                }
                let g = groups.len();
                let mut q = vec![s];
                comp[s] = Some(g);
                let mut members = vec![];
                while let Some(x) = q.pop() {
                    members.push(x);
                    for &y in &cur {
                        if comp[y].is_none() && mr(x, y) < d {
                            comp[y] = Some(g);
                            q.push(y);
                        }
                    }
                }
                members.sort();
                groups.push(members);
            }
            if groups.len() == 1 {
                continue;
            }
            let l = lam(d);
            let big: Vec<Vec<usize>> = groups.iter().filter(|g| g.len() >= mcs).cloned().collect();
            for g in groups.iter().filter(|g| g.len() < mcs) {
                for &x in g {
                    exit[x] = (id, l);
                }
            }
            if big.len() == 1 {
                cur = big[0].clone();
                continue;
            }
            nodes[id].death = l;
            for g in big {
                let c = nodes.len();
                nodes.push(Node { members: g, parent: Some(id), birth: l, death: l });
                work.push((c, d));
            }
            break;
        }
    }
    let m = nodes.len();
    let stability: Vec<f64> = (0..m)
        .map(|c| {
            nodes[c]
                .members
                .iter()
                .map(|&x| {
                    let l = if exit[x].0 == c { exit[x].1 } else { nodes[c].death };
                    l - nodes[c].birth
                })
                .sum()
        })
        .collect();
    let ancestor = |a: usize, mut b: usize| loop {
        if a == b {
            return true;
        }
        match nodes[b].parent {
            Some(pb) => b = pb,
            None => return false,
        }
    };
    let leaves: Vec<usize> = (0..m).filter(|&c| !nodes.iter().any(|x| x.parent == Some(c))).collect();
    let mut best: Option<(f64, usize, u32)> = None;
    for mask in 0u32..(1 << m) {
        let sel: Vec<usize> = (0..m).filter(|&c| mask & (1 << c) != 0).collect();
        let antichain = sel.iter().all(|&a| sel.iter().all(|&b| a == b || !ancestor(a, b)));
        let covering = leaves.iter().all(|&l| sel.iter().any(|&s| ancestor(s, l)));
        if !antichain || !covering {
            continue;
        }
        let total: f64 = sel.iter().map(|&c| stability[c]).sum();
        let better = match best {
            None => true,
            Some((t, k, _)) => total > t || (total == t && sel.len() < k),
        };
        if better {
            best = Some((total, sel.len(), mask));
        }
    }
    let mask = best.unwrap().2;
    let labels: Vec<i64> = (0..n)
        .map(|x| {
            (0..m)
                .find(|&s| mask & (1 << s) != 0 && ancestor(s, exit[x].0))
                .map_or(-1, |s| s as i64)
        })
        .collect();
    canonical(&labels)
}
