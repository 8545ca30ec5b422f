use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ClusterLabeling, DensityParams, MstEdge, SpanningTree};

/// λ used for zero distances (duplicate points).
pub const LAMBDA_CAP: f64 = 1e200;

pub fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        (1.0 / distance).min(LAMBDA_CAP)
    } else {
        LAMBDA_CAP
    }
}

/// One cluster of the condensed tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedCluster {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub birth_lambda: f64,
    pub death_lambda: f64,
    /// Members at birth, ascending.
    pub members: Vec<usize>,
    pub stability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedTree {
    pub clusters: Vec<CondensedCluster>,
    /// For every point: the cluster it finally left and the λ at which it left.
    pub fall_out: Vec<(usize, f64)>,
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

/// Builds the condensed tree top-down: at each distance level every edge of
/// that weight is cut at once, components smaller than `min_cluster_size`
/// fall out as noise, and a cluster ends when it splits into two or more
/// large components.
pub fn condense(tree: &SpanningTree, min_cluster_size: usize) -> CondensedTree {
    let n = tree.n_points;
    let mut clusters = vec![CondensedCluster {
        parent: None,
        children: Vec::new(),
        birth_lambda: 0.0,
        death_lambda: 0.0,
        members: (0..n).collect(),
        stability: 0.0,
    }];
    let mut fall_out = vec![(0usize, 0.0f64); n];
    let mut dsu = Dsu((0..n).collect());
    let mut stack: Vec<(usize, Vec<usize>, Vec<MstEdge>)> = vec![(0, (0..n).collect(), tree.edges.clone())];

    while let Some((id, mut points, mut edges)) = stack.pop() {
        loop {
            let Some(d) = edges.iter().map(|e| e.weight).reduce(f64::max) else {
                // a lone point cannot form a cluster; only reachable when min_cluster_size < 2
                let lambda = LAMBDA_CAP;
                for &p in &points {
                    fall_out[p] = (id, lambda);
                }
                clusters[id].death_lambda = lambda;
                break;
            };
            let lambda = lambda_of(d);
            let kept: Vec<MstEdge> = edges.iter().copied().filter(|e| e.weight < d).collect();
            for &p in &points {
                dsu.0[p] = p;
            }
            for e in &kept {
                dsu.union(e.a, e.b);
            }
            let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for &p in &points {
                comps.entry(dsu.find(p)).or_default().push(p);
            }
            let big: Vec<usize> = comps
                .iter()
                .filter(|(_, m)| m.len() >= min_cluster_size)
                .map(|(&r, _)| r)
                .collect();
            for (r, m) in &comps {
                if !big.contains(r) {
                    for &p in m {
                        fall_out[p] = (id, lambda);
                    }
                }
            }
            if big.len() == 1 {
                points = comps.remove(&big[0]).expect("component exists");
                edges = kept.into_iter().filter(|e| dsu.find(e.a) == big[0]).collect();
                continue;
            }
            clusters[id].death_lambda = lambda;
            if big.len() >= 2 {
                for r in big {
                    let members = comps.remove(&r).expect("component exists");
                    let child_edges: Vec<MstEdge> = kept.iter().copied().filter(|e| dsu.find(e.a) == r).collect();
                    let child = clusters.len();
                    clusters.push(CondensedCluster {
                        parent: Some(id),
                        children: Vec::new(),
                        birth_lambda: lambda,
                        death_lambda: lambda,
                        members: members.clone(),
                        stability: 0.0,
                    });
                    clusters[id].children.push(child);
                    stack.push((child, members, child_edges));
                }
            }
            break;
        }
    }

    for &(c, lambda) in &fall_out {
        clusters[c].stability += lambda - clusters[c].birth_lambda;
    }
    for c in 0..clusters.len() {
        let death = clusters[c].death_lambda;
        let birth = clusters[c].birth_lambda;
        let into_children: usize = clusters[c].children.iter().map(|&k| clusters[k].members.len()).sum();
        clusters[c].stability += into_children as f64 * (death - birth);
    }
    CondensedTree { clusters, fall_out }
}

/// Excess-of-mass selection: bottom-up, a cluster is kept when its own
/// stability is at least the best total of its descendants (ties keep the
/// parent). The root competes only when `allow_single_cluster` is set.
pub fn select_clusters(tree: &CondensedTree, allow_single_cluster: bool) -> Vec<usize> {
    let m = tree.clusters.len();
    let mut best = vec![0.0; m];
    let mut chosen = vec![false; m];
    // children always have larger ids than their parent
    for c in (0..m).rev() {
        let node = &tree.clusters[c];
        let eligible = c != 0 || allow_single_cluster;
        let below: f64 = node.children.iter().map(|&k| best[k]).sum();
        if node.children.is_empty() {
            chosen[c] = eligible;
            best[c] = node.stability;
        } else if eligible && node.stability >= below {
            chosen[c] = true;
            best[c] = node.stability;
        } else {
            best[c] = below;
        }
    }
    // keep the top-most chosen clusters
    let mut selected = Vec::new();
    let mut stack = vec![0usize];
    while let Some(c) = stack.pop() {
        if chosen[c] {
            selected.push(c);
        } else {
            stack.extend(tree.clusters[c].children.iter().copied());
        }
    }
    selected.sort_unstable();
    selected
}

/// Labels from a spanning tree: points whose final cluster lies under a
/// selected cluster get that cluster's label, others are noise (−1). Labels
/// are numbered by the smallest point index of each cluster.
pub fn extract_clusters(tree: &SpanningTree, params: &DensityParams) -> ClusterLabeling {
    let n = tree.n_points;
    if n < params.min_cluster_size {
        return ClusterLabeling::from_labels(vec![-1; n]);
    }
    let condensed = condense(tree, params.min_cluster_size);
    let selected = select_clusters(&condensed, params.allow_single_cluster);
    let mut owner = vec![None; condensed.clusters.len()];
    for &s in &selected {
        let mut stack = vec![s];
        while let Some(c) = stack.pop() {
            owner[c] = Some(s);
            stack.extend(condensed.clusters[c].children.iter().copied());
        }
    }
    let raw: Vec<Option<usize>> = condensed.fall_out.iter().map(|&(c, _)| owner[c]).collect();
    let mut rename: BTreeMap<usize, i64> = BTreeMap::new();
    let labels = raw
        .iter()
        .map(|o| match o {
            Some(s) => {
                let next = rename.len() as i64;
                *rename.entry(*s).or_insert(next)
            }
            None => -1,
        })
        .collect();
    ClusterLabeling::from_labels(labels)
}
