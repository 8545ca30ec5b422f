use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::DensityParams;
use crate::error::{Error, Result};
use crate::ingest::{CleaningRules, ColumnMap, SegmentationConfig};
use crate::lasso::{SelectionRule, SolverConfig};
use crate::nmf::{GridSpec, NmfConfig, NmfInit};
use crate::rfm::{RfmWeights, SearchInterval};

/// Name of the canonical config copy stored in every run directory.
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfmSettings {
    pub weights: RfmWeights,
    pub search: SearchInterval,
    /// Reference date for recency (`%Y-%m-%d %H:%M:%S`); defaults to one
    /// day after the latest transaction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub as_of: Option<String>,
}

impl Default for RfmSettings {
    fn default() -> Self {
        Self {
            weights: RfmWeights::default(),
            search: SearchInterval::default(),
            as_of: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoSettings {
    /// Points in the log-spaced alpha grid below `alpha_max`.
    pub grid_size: usize,
    /// Smallest grid alpha as a fraction of `alpha_max`.
    pub grid_ratio: f64,
    /// Explicit alpha grid; replaces the log-spaced one when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<Vec<f64>>,
    pub folds: usize,
    pub seed: u64,
    pub holdout_fraction: f64,
    pub selection: SelectionRule,
    pub solver: SolverConfig,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            grid_size: 50,
            grid_ratio: 1e-3,
            alpha_grid: None,
            folds: 5,
            seed: 0,
            holdout_fraction: 0.2,
            selection: SelectionRule::default(),
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmfSettings {
    pub k: usize,
    pub alpha_m: f64,
    pub l1_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub init: NmfInit,
    pub n_init: usize,
    pub seed: u64,
    /// Factorize with the grid-search winner instead of `k`/`alpha_m`/`l1_ratio`.
    pub use_grid_best: bool,
    /// Items listed per dictionary element in the profile output.
    pub top_items: usize,
    pub grid: GridSpec,
}

impl Default for NmfSettings {
    fn default() -> Self {
        let base = NmfConfig::default();
        Self {
            k: base.k,
            alpha_m: base.alpha_m,
            l1_ratio: base.l1_ratio,
            tol: base.tol,
            max_iter: base.max_iter,
            init: base.init,
            n_init: base.n_init,
            seed: 0,
            use_grid_best: false,
            top_items: 10,
            grid: GridSpec::default(),
        }
    }
}

impl NmfSettings {
    pub fn config(&self) -> NmfConfig {
        NmfConfig {
            k: self.k,
            alpha_m: self.alpha_m,
            l1_ratio: self.l1_ratio,
            tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
            init: self.init,
            n_init: self.n_init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSettings {
    #[serde(flatten)]
    pub density: DensityParams,
    /// Scale affinity rows to unit length before clustering.
    pub row_normalize: bool,
}

impl Default for ClusterSettings {
    fn default() -> Self {
        Self {
            density: DensityParams::default(),
            row_normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphSettings {
    /// Affinity edges are kept when the weight exceeds this; defaults to the
    /// median non-zero affinity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub affinity_threshold: Option<f64>,
}

impl Default for GraphSettings {
    fn default() -> Self {
        Self {
            affinity_threshold: None,
        }
    }
}

/// Everything a run needs. Stored as `config.toml` in the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub columns: ColumnMap,
    pub cleaning: CleaningRules,
    pub segmentation: SegmentationConfig,
    pub rfm: RfmSettings,
    pub lasso: LassoSettings,
    pub nmf: NmfSettings,
    pub cluster: ClusterSettings,
    pub graph: GraphSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::from("data.csv"),
            output_dir: PathBuf::from("run"),
            columns: ColumnMap::default(),
            cleaning: CleaningRules::default(),
            segmentation: SegmentationConfig::default(),
            rfm: RfmSettings::default(),
            lasso: LassoSettings::default(),
            nmf: NmfSettings::default(),
            cluster: ClusterSettings::default(),
            graph: GraphSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Canonical text form: every field written, in declaration order.
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Sets every stage seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.lasso.seed = seed;
        self.nmf.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if self.lasso.folds < 2 {
            return Err(Error::invalid("lasso.folds must be >= 2"));
        }
        if !(self.lasso.holdout_fraction > 0.0 && self.lasso.holdout_fraction < 1.0) {
            return Err(Error::invalid("lasso.holdout_fraction must lie in (0, 1)"));
        }
        if self.lasso.alpha_grid.is_none()
            && (self.lasso.grid_size == 0 || !(self.lasso.grid_ratio > 0.0 && self.lasso.grid_ratio < 1.0))
        {
            return Err(Error::invalid("lasso grid needs grid_size >= 1 and grid_ratio in (0, 1)"));
        }
        if self.nmf.top_items == 0 {
            return Err(Error::invalid("nmf.top_items must be >= 1"));
        }
        if self.rfm.search.lo >= self.rfm.search.hi {
            return Err(Error::invalid("rfm.search.lo must be below rfm.search.hi"));
        }
        self.cluster.density.validate()
    }
}
