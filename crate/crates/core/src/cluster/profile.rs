use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ClusterLabeling;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub cluster: i64,
    pub size: usize,
    pub centroid: Vec<f64>,
    pub normalized_centroid: Vec<f64>,
    /// The centroid is the zero vector and could not be normalized.
    pub zero_centroid: bool,
}

/// Mean affinity row of each non-noise cluster, and its unit-length copy.
pub fn profile_clusters(labels: &ClusterLabeling, w: &DMatrix<f64>) -> Vec<ClusterProfile> {
    labels
        .sizes
        .iter()
        .map(|(&cluster, &size)| {
            let mut centroid = vec![0.0; w.ncols()];
            for (i, _) in labels.labels.iter().enumerate().filter(|(_, &l)| l == cluster) {
                for (k, c) in centroid.iter_mut().enumerate() {
                    *c += w[(i, k)];
                }
            }
            centroid.iter_mut().for_each(|c| *c /= size as f64);
            let norm = centroid.iter().map(|c| c * c).sum::<f64>().sqrt();
            let zero_centroid = norm == 0.0;
            let normalized_centroid = if zero_centroid {
                centroid.clone()
            } else {
                centroid.iter().map(|c| c / norm).collect()
            };
            ClusterProfile {
                cluster,
                size,
                centroid,
                normalized_centroid,
                zero_centroid,
            }
        })
        .collect()
}

/// Copy of `w` with each non-zero row scaled to unit length.
pub fn row_normalize(w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = w.clone();
    for mut row in out.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row.unscale_mut(norm);
        }
    }
    out
}
