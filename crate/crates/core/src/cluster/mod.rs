//! Noise-aware density clustering of customer affinities: core distances,
//! a mutual-reachability spanning tree, a condensed cluster tree and
//! excess-of-mass cluster selection, plus centroid profiles.

mod density;
mod profile;
mod tree;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use density::{core_distances, euclidean, mutual_reachability, mutual_reachability_mst, MstEdge, SpanningTree};
pub use profile::{profile_clusters, row_normalize, ClusterProfile};
pub use tree::{condense, extract_clusters, lambda_of, select_clusters, CondensedCluster, CondensedTree, LAMBDA_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensityParams {
    pub min_cluster_size: usize,
    /// Neighbour rank used for core distances.
    pub min_samples: usize,
    pub metric: Metric,
    /// Let the root of the condensed tree be selected, so unimodal data
    /// forms one cluster instead of all noise.
    pub allow_single_cluster: bool,
}

impl Default for DensityParams {
    fn default() -> Self {
        Self {
            min_cluster_size: 5,
            min_samples: 5,
            metric: Metric::Euclidean,
            allow_single_cluster: true,
        }
    }
}

impl DensityParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::invalid("min_cluster_size must be >= 2"));
        }
        if self.min_samples < 1 || self.min_samples > self.min_cluster_size {
            return Err(Error::invalid(format!(
                "min_samples = {} must lie in 1..={}",
                self.min_samples, self.min_cluster_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabeling {
    /// Cluster id per row; −1 is noise.
    pub labels: Vec<i64>,
    pub n_clusters: usize,
    /// Size of each non-noise cluster.
    pub sizes: BTreeMap<i64, usize>,
    pub noise: usize,
}

impl ClusterLabeling {
    pub fn from_labels(labels: Vec<i64>) -> Self {
        let mut sizes = BTreeMap::new();
        let mut noise = 0;
        for &l in &labels {
            if l < 0 {
                noise += 1;
            } else {
                *sizes.entry(l).or_insert(0) += 1;
            }
        }
        Self {
            n_clusters: sizes.len(),
            labels,
            sizes,
            noise,
        }
    }
}

/// Clusters the rows of `points`.
pub fn cluster_rows(points: &DMatrix<f64>, params: &DensityParams) -> Result<ClusterLabeling> {
    params.validate()?;
    let n = points.nrows();
    if n < params.min_cluster_size {
        return Ok(ClusterLabeling::from_labels(vec![-1; n]));
    }
    let core = core_distances(points, params.min_samples)?;
    let tree = mutual_reachability_mst(points, &core)?;
    Ok(extract_clusters(&tree, params))
}
