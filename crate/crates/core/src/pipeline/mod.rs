//! Stage orchestration over a run directory: a canonical config, one
//! subdirectory of plain-file artifacts per stage and a digest manifest.

mod config;
mod manifest;
mod plots;
mod stages;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::{
    ClusterSettings, GraphSettings, LassoSettings, NmfSettings, PipelineConfig, RfmSettings, CONFIG_FILE,
};
pub use manifest::{FileDigest, RunManifest, StageEntry, MANIFEST_FILE};
pub use plots::{emit_plot_data, plot_catalog, PlotKind, PLOTS_DIR};
pub use stages::{load_factorization, load_labels, run_all, run_stage};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Rfm,
    SelectFeatures,
    GridSearch,
    Factorize,
    Cluster,
    ExportGraph,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Rfm,
        Stage::SelectFeatures,
        Stage::GridSearch,
        Stage::Factorize,
        Stage::Cluster,
        Stage::ExportGraph,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Rfm => "rfm",
            Stage::SelectFeatures => "select-features",
            Stage::GridSearch => "grid-search",
            Stage::Factorize => "factorize",
            Stage::Cluster => "cluster",
            Stage::ExportGraph => "export-graph",
        }
    }

    /// Artifact directory of the stage, relative to the run directory.
    pub fn dir(self) -> &'static str {
        self.as_str()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown stage `{s}`; valid stages: {}",
                    Stage::ALL.map(Stage::as_str).join(", ")
                ))
            })
    }
}
