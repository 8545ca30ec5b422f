use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn euclidean(points: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    points
        .row(a)
        .iter()
        .zip(points.row(b).iter())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Distance from every row to its `min_samples`-th nearest other row.
pub fn core_distances(points: &DMatrix<f64>, min_samples: usize) -> Result<Vec<f64>> {
    let n = points.nrows();
    if min_samples == 0 {
        return Err(Error::invalid("min_samples must be >= 1"));
    }
    if n <= min_samples {
        return Err(Error::invalid(format!(
            "{n} points cannot have a {min_samples}-th nearest neighbour"
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cluster input".into()));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| euclidean(points, i, j)).collect();
            let (_, kth, _) = d.select_nth_unstable_by(min_samples - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

pub fn mutual_reachability(points: &DMatrix<f64>, core: &[f64], a: usize, b: usize) -> f64 {
    euclidean(points, a, b).max(core[a]).max(core[b])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanningTree {
    pub n_points: usize,
    /// `n_points - 1` edges with `a < b`.
    pub edges: Vec<MstEdge>,
}

impl SpanningTree {
    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }
}

/// Prim's algorithm on the complete mutual-reachability graph. Ties pick
/// the lowest vertex index, and each vertex attaches to the lowest-index
/// tree vertex among equally close ones.
pub fn mutual_reachability_mst(points: &DMatrix<f64>, core: &[f64]) -> Result<SpanningTree> {
    let n = points.nrows();
    if n < 2 {
        return Err(Error::invalid("a spanning tree needs at least 2 points"));
    }
    if core.len() != n {
        return Err(Error::Dimension(format!("{} core distances for {n} points", core.len())));
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut link = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if !in_tree[j] {
                let d = mutual_reachability(points, core, current, j);
                if d < best[j] {
                    best[j] = d;
                    link[j] = current;
                }
            }
        }
        let next = (0..n)
            .filter(|&j| !in_tree[j])
            .min_by(|&x, &y| best[x].total_cmp(&best[y]).then(x.cmp(&y)))
            .expect("a vertex remains outside the tree");
        in_tree[next] = true;
        edges.push(MstEdge {
            a: link[next].min(next),
            b: link[next].max(next),
            weight: best[next],
        });
        current = next;
    }
    Ok(SpanningTree { n_points: n, edges })
}
