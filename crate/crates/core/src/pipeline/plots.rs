use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value;

use super::stages::{
    require, CENTROIDS, CV_CURVE, DICTIONARY, DROP_CURVE, GRID_TABLE, LABELS, PP, PREDICTED, SCORES, TRACE,
};
use super::Stage;
use crate::error::{Error, Result};
use crate::io::{read_csv_with_header, CsvSink};

/// Plot-data subdirectory of a run.
pub const PLOTS_DIR: &str = "plots";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PlotKind {
    /// Holdout MSE against the number of retained items.
    DropCurve,
    /// Cross-validated MSE against alpha.
    CvCurve,
    /// Imputation MSE of every successful grid cell.
    GridTable,
    /// Customers per cluster, noise as cluster −1.
    ClusterSizes,
    /// Heaviest items of each dictionary element.
    DictionaryProfile,
    /// Normal P-P coordinates of the standardized residuals.
    ResidualPp,
    PredictedActual,
    /// Unit-length cluster centroids in long form.
    CentroidHeatmap,
    /// Raw and transformed RFM scores.
    RfmScores,
    /// NMF objective per sweep.
    NmfTrace,
}

impl PlotKind {
    pub const ALL: [PlotKind; 10] = [
        PlotKind::DropCurve,
        PlotKind::CvCurve,
        PlotKind::GridTable,
        PlotKind::ClusterSizes,
        PlotKind::DictionaryProfile,
        PlotKind::ResidualPp,
        PlotKind::PredictedActual,
        PlotKind::CentroidHeatmap,
        PlotKind::RfmScores,
        PlotKind::NmfTrace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlotKind::DropCurve => "drop-curve",
            PlotKind::CvCurve => "cv-curve",
            PlotKind::GridTable => "grid-table",
            PlotKind::ClusterSizes => "cluster-sizes",
            PlotKind::DictionaryProfile => "dictionary-profile",
            PlotKind::ResidualPp => "residual-pp",
            PlotKind::PredictedActual => "predicted-actual",
            PlotKind::CentroidHeatmap => "centroid-heatmap",
            PlotKind::RfmScores => "rfm-scores",
            PlotKind::NmfTrace => "nmf-trace",
        }
    }

    fn source(self) -> (Stage, &'static str) {
        match self {
            PlotKind::DropCurve => (Stage::SelectFeatures, DROP_CURVE),
            PlotKind::CvCurve => (Stage::SelectFeatures, CV_CURVE),
            PlotKind::GridTable => (Stage::GridSearch, GRID_TABLE),
            PlotKind::ClusterSizes => (Stage::Cluster, LABELS),
            PlotKind::DictionaryProfile => (Stage::Factorize, DICTIONARY),
            PlotKind::ResidualPp => (Stage::SelectFeatures, PP),
            PlotKind::PredictedActual => (Stage::SelectFeatures, PREDICTED),
            PlotKind::CentroidHeatmap => (Stage::Cluster, CENTROIDS),
            PlotKind::RfmScores => (Stage::Rfm, SCORES),
            PlotKind::NmfTrace => (Stage::Factorize, TRACE),
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownPlot {
                kind: s.to_string(),
                valid: PlotKind::ALL.map(PlotKind::as_str).join(", "),
            })
    }
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
}

/// Copies the named columns of a headed CSV file.
fn project(src: &Path, dest: &Path, columns: &[&str], keep: impl Fn(&[String]) -> bool) -> Result<()> {
    let (header, rows) = read_csv_with_header(src)?;
    let idx = columns
        .iter()
        .map(|c| column(&header, c, src))
        .collect::<Result<Vec<_>>>()?;
    let mut sink = CsvSink::create(dest, columns)?;
    for r in rows.iter().filter(|r| keep(r)) {
        let rec: Vec<&str> = idx.iter().map(|&i| r.get(i).map(String::as_str).unwrap_or("")).collect();
        sink.row(&rec)?;
    }
    sink.finish()
}

/// Writes `plots/<kind>.csv` from an existing stage artifact and returns its
/// path. Rows are `(x, y[, series])` style tables with a header.
pub fn emit_plot_data(root: &Path, kind: &str) -> Result<PathBuf> {
    let kind: PlotKind = kind.parse()?;
    let (stage, artifact) = kind.source();
    let src = require(root, stage, stage, artifact)?;
    let dest = root.join(PLOTS_DIR).join(format!("{kind}.csv"));
    match kind {
        PlotKind::DropCurve => project(&src, &dest, &["n_features", "holdout_mse"], |_| true)?,
        PlotKind::CvCurve => project(&src, &dest, &["alpha", "mean_mse", "std_mse"], |_| true)?,
        PlotKind::GridTable => {
            let (header, _) = read_csv_with_header(&src)?;
            let mse = column(&header, "imputation_mse", &src)?;
            project(&src, &dest, &["k", "alpha_m", "l1_ratio", "imputation_mse"], |r| {
                r.get(mse).is_some_and(|v| !v.is_empty())
            })?
        }
        PlotKind::ClusterSizes => {
            let (header, rows) = read_csv_with_header(&src)?;
            let c = column(&header, "cluster", &src)?;
            let mut counts = std::collections::BTreeMap::<i64, usize>::new();
            for r in &rows {
                let label: i64 = r[c].parse().map_err(|_| Error::Csv {
                    path: src.clone(),
                    row: None,
                    message: format!("bad cluster label `{}`", r[c]),
                })?;
                *counts.entry(label).or_insert(0) += 1;
            }
            counts.entry(-1).or_insert(0);
            let mut sink = CsvSink::create(&dest, &["cluster", "size"])?;
            for (label, n) in counts {
                sink.row(&[label.to_string(), n.to_string()])?;
            }
            sink.finish()?
        }
        PlotKind::DictionaryProfile => project(&src, &dest, &["element", "stock_code", "weight"], |_| true)?,
        PlotKind::ResidualPp => project(&src, &dest, &["theoretical", "empirical"], |_| true)?,
        PlotKind::PredictedActual => project(&src, &dest, &["predicted", "actual"], |_| true)?,
        PlotKind::CentroidHeatmap => {
            let (header, rows) = read_csv_with_header(&src)?;
            let mut sink = CsvSink::create(&dest, &["cluster", "element", "value"])?;
            for r in &rows {
                for (j, element) in header.iter().enumerate().skip(2) {
                    sink.row(&[r[0].as_str(), element.as_str(), r[j].as_str()])?;
                }
            }
            sink.finish()?
        }
        PlotKind::RfmScores => project(&src, &dest, &["gamma", "gamma_prime"], |_| true)?,
        PlotKind::NmfTrace => project(&src, &dest, &["iteration", "objective"], |_| true)?,
    }
    Ok(dest)
}

/// Plot ids and the stage each one reads from, for help output.
pub fn plot_catalog() -> Value {
    Value::Array(
        PlotKind::ALL
            .iter()
            .map(|k| serde_json::json!({ "id": k.as_str(), "stage": k.source().0.as_str() }))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_kind_lists_valid_ids() {
        let dir = tempfile::tempdir().unwrap();
        match emit_plot_data(dir.path(), "histogram").unwrap_err() {
            Error::UnknownPlot { kind, valid } => {
                assert_eq!(kind, "histogram");
                for k in PlotKind::ALL {
                    assert!(valid.contains(k.as_str()));
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_artifact_names_stage() {
        let dir = tempfile::tempdir().unwrap();
        let err = emit_plot_data(dir.path(), "grid-table").unwrap_err();
        assert!(matches!(err, Error::MissingArtifact { ref required, .. } if required == "grid-search"));
    }

    #[test]
    fn cluster_sizes_always_has_noise_row() {
        let dir = tempfile::tempdir().unwrap();
        let labels = dir.path().join(LABELS);
        crate::io::write_text(&labels, "customer_id,cluster\na,0\nb,0\nc,1\n").unwrap();
        let out = emit_plot_data(dir.path(), "cluster-sizes").unwrap();
        let text = std::fs::read_to_string(out).unwrap();
        assert_eq!(text, "cluster,size\n-1,0\n0,2\n1,1\n");
    }
}
