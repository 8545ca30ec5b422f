use serde::{Deserialize, Serialize};

use super::DropExperimentCurve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionRule {
    /// Accept any feature count whose holdout MSE is within this fraction of the minimum.
    pub slack: f64,
}

impl Default for SelectionRule {
    fn default() -> Self {
        Self { slack: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub stock_code: String,
    /// LASSO coefficient (signed).
    pub beta: f64,
    pub rank: usize,
}

/// Selected items ordered by decreasing |beta|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub features: Vec<RankedFeature>,
    pub selected_count: usize,
}

impl FeatureRanking {
    pub fn stock_codes(&self) -> Vec<String> {
        self.features.iter().map(|f| f.stock_code.clone()).collect()
    }
}

/// Picks the smallest feature count whose holdout MSE is within
/// `(1 + slack)` of the curve minimum and ranks the surviving items.
pub fn select_features(curve: &DropExperimentCurve, rule: &SelectionRule) -> FeatureRanking {
    let min = curve
        .points
        .iter()
        .map(|p| p.holdout_mse)
        .fold(f64::INFINITY, f64::min);
    let Some(n) = curve
        .points
        .iter()
        .filter(|p| p.holdout_mse <= (1.0 + rule.slack) * min)
        .map(|p| p.n_features)
        .min()
    else {
        return FeatureRanking {
            features: Vec::new(),
            selected_count: 0,
        };
    };
    let mut kept = curve.survivors(n);
    kept.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    FeatureRanking {
        selected_count: kept.len(),
        features: kept
            .into_iter()
            .enumerate()
            .map(|(i, (stock_code, beta))| RankedFeature {
                stock_code,
                beta,
                rank: i + 1,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lasso::CurvePoint;

    fn curve(mse: &[f64]) -> DropExperimentCurve {
        let p = mse.len() - 1;
        let support: Vec<(String, f64)> = (0..p).map(|i| (format!("s{i}"), (i + 1) as f64)).collect();
        DropExperimentCurve {
            points: mse
                .iter()
                .enumerate()
                .map(|(i, &m)| CurvePoint {
                    n_features: p - i,
                    holdout_mse: m,
                    ridge: false,
                })
                .collect(),
            drop_order: support.iter().map(|s| s.0.clone()).collect(),
            support,
        }
    }

    #[test]
    fn monotone_curve_keeps_full_support() {
        // mse decreasing as features are added: minimum at the full support
        let r = select_features(&curve(&[1.0, 2.0, 3.0, 4.0, 5.0]), &SelectionRule::default());
        assert_eq!(r.selected_count, 4);
        assert_eq!(r.features[0].stock_code, "s3");
        assert_eq!(r.features[0].rank, 1);
    }

    #[test]
    fn v_shaped_curve_selects_minimum() {
        // n_features 6..0 with minimum at 3
        let r = select_features(&curve(&[2.0, 1.6, 1.3, 1.0, 1.8, 2.5, 3.0]), &SelectionRule::default());
        assert_eq!(r.selected_count, 3);
        assert_eq!(r.stock_codes(), vec!["s5", "s4", "s3"]);
    }

    #[test]
    fn slack_prefers_fewer_features() {
        let r = select_features(&curve(&[1.0, 1.04, 3.0]), &SelectionRule { slack: 0.05 });
        assert_eq!(r.selected_count, 1);
        let r = select_features(&curve(&[1.0, 1.04, 3.0]), &SelectionRule { slack: 0.0 });
        assert_eq!(r.selected_count, 2);
    }
}
