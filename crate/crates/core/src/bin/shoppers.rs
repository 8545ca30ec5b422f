use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use shoppers_core::graph::{read_jsonl, similar_nodes};
use shoppers_core::pipeline::{
    emit_plot_data, plot_catalog, run_all, run_stage, PipelineConfig, PlotKind, RunManifest, Stage, StageEntry,
};
use shoppers_core::rfm::RfmWeights;

#[derive(Parser)]
#[command(name = "shoppers", version, about = "Frequent-shopper characterization pipeline")]
struct Cli {
    /// Pipeline config (TOML). Defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Seed for every randomized stage.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    /// Invoice CSV file.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Run directory for artifacts.
    #[arg(long, short, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    frequent_min_purchases: Option<usize>,
    #[arg(long, global = true)]
    wholesale_quantity_threshold: Option<i64>,
    /// RFM weights as `recency,frequency,monetary`.
    #[arg(long, global = true, value_delimiter = ',', num_args = 3)]
    rfm_weights: Option<Vec<f64>>,
    /// Recency reference date, `%Y-%m-%d %H:%M:%S`.
    #[arg(long, global = true)]
    as_of: Option<String>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long, global = true)]
    alpha_grid_size: Option<usize>,
    #[arg(long, global = true)]
    holdout_fraction: Option<f64>,
    #[arg(long, global = true)]
    slack: Option<f64>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    alpha_m: Option<f64>,
    #[arg(long, global = true)]
    l1_ratio: Option<f64>,
    /// Factorize with the grid-search winner.
    #[arg(long, global = true)]
    use_grid_best: bool,
    /// Grid-search k values as `min..=max`.
    #[arg(long, global = true)]
    k_range: Option<String>,
    #[arg(long, global = true)]
    min_cluster_size: Option<usize>,
    #[arg(long, global = true)]
    min_samples: Option<usize>,
    /// Cluster raw affinities instead of unit-length rows.
    #[arg(long, global = true)]
    no_row_normalize: bool,
    #[arg(long, global = true)]
    affinity_threshold: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, clean and segment invoices; build the purchase matrix.
    Ingest,
    /// Score frequent shoppers and fit the Box-Cox transform.
    Rfm,
    /// Cross-validated LASSO, drop experiment and item selection.
    SelectFeatures,
    /// Factorize the reduced purchase matrix.
    Factorize,
    /// Imputation-error grid search over NMF hyperparameters.
    GridSearch,
    /// Density clustering of customer affinities.
    Cluster,
    /// Write purchase and affinity graphs.
    ExportGraph,
    /// Run every stage in order.
    RunAll,
    /// Nodes most similar to a customer or item of the exported purchase graph.
    QuerySimilar {
        /// Node key (e.g. `c-12347`) or unique id.
        node: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Search the affinity graph instead of the purchase graph.
        #[arg(long)]
        affinity: bool,
    },
    /// Write plot data for one figure, or `all`.
    PlotData {
        /// Plot id; `list` prints the catalog.
        kind: String,
    },
    /// Print the effective config in canonical form.
    ShowConfig,
    /// Recompute manifest digests and report mismatches.
    Verify,
}

fn apply(o: &Overrides, cfg: &mut PipelineConfig) -> Result<()> {
    if let Some(v) = &o.input {
        cfg.input = v.clone();
    }
    if let Some(v) = &o.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = o.frequent_min_purchases {
        cfg.segmentation.frequent_min_purchases = v;
    }
    if let Some(v) = o.wholesale_quantity_threshold {
        cfg.segmentation.wholesale_quantity_threshold = v;
    }
    if let Some(w) = &o.rfm_weights {
        cfg.rfm.weights = RfmWeights::new(w[0], w[1], w[2])?;
    }
    if let Some(v) = &o.as_of {
        cfg.rfm.as_of = Some(v.clone());
    }
    if let Some(v) = o.folds {
        cfg.lasso.folds = v;
    }
    if let Some(v) = o.alpha_grid_size {
        cfg.lasso.grid_size = v;
        cfg.lasso.alpha_grid = None;
    }
    if let Some(v) = o.holdout_fraction {
        cfg.lasso.holdout_fraction = v;
    }
    if let Some(v) = o.slack {
        cfg.lasso.selection.slack = v;
    }
    if let Some(v) = o.k {
        cfg.nmf.k = v;
    }
    if let Some(v) = o.alpha_m {
        cfg.nmf.alpha_m = v;
    }
    if let Some(v) = o.l1_ratio {
        cfg.nmf.l1_ratio = v;
    }
    if o.use_grid_best {
        cfg.nmf.use_grid_best = true;
    }
    if let Some(r) = &o.k_range {
        let (lo, hi) = r
            .split_once("..=")
            .with_context(|| format!("k range `{r}` must look like 2..=20"))?;
        let (lo, hi): (usize, usize) = (lo.trim().parse()?, hi.trim().parse()?);
        if lo == 0 || lo > hi {
            bail!("k range `{r}` is empty or starts at 0");
        }
        cfg.nmf.grid.k_values = (lo..=hi).collect();
    }
    if let Some(v) = o.min_cluster_size {
        cfg.cluster.density.min_cluster_size = v;
    }
    if let Some(v) = o.min_samples {
        cfg.cluster.density.min_samples = v;
    }
    if o.no_row_normalize {
        cfg.cluster.row_normalize = false;
    }
    if let Some(v) = o.affinity_threshold {
        cfg.graph.affinity_threshold = Some(v);
    }
    Ok(())
}

fn print_entry(entry: &StageEntry) -> Result<()> {
    println!(
        "{} ({} ms): {}",
        entry.stage,
        entry.elapsed_ms,
        serde_json::to_string(&entry.metrics)?
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    apply(&cli.overrides, &mut cfg)?;

    let stage = match &cli.command {
        Command::Ingest => Some(Stage::Ingest),
        Command::Rfm => Some(Stage::Rfm),
        Command::SelectFeatures => Some(Stage::SelectFeatures),
        Command::Factorize => Some(Stage::Factorize),
        Command::GridSearch => Some(Stage::GridSearch),
        Command::Cluster => Some(Stage::Cluster),
        Command::ExportGraph => Some(Stage::ExportGraph),
        _ => None,
    };
    if let Some(stage) = stage {
        return print_entry(&run_stage(stage, &cfg)?);
    }

    match cli.command {
        Command::RunAll => {
            let manifest = run_all(&cfg)?;
            for entry in &manifest.stages {
                print_entry(entry)?;
            }
        }
        Command::QuerySimilar { node, top, affinity } => {
            let sub = if affinity { "affinity" } else { "purchase" };
            let dir = cfg.output_dir.join(Stage::ExportGraph.dir()).join(sub);
            let doc = read_jsonl(&dir).with_context(|| format!("run `export-graph` first ({})", dir.display()))?;
            for hit in similar_nodes(&doc, &node, top)? {
                println!("{}\t{}\t{:.6}", hit.key, hit.id, hit.similarity);
            }
        }
        Command::PlotData { kind } => match kind.as_str() {
            "list" => println!("{}", serde_json::to_string_pretty(&plot_catalog())?),
            "all" => {
                for k in PlotKind::ALL {
                    match emit_plot_data(&cfg.output_dir, k.as_str()) {
                        Ok(path) => println!("{}", path.display()),
                        Err(e) => eprintln!("skipping {k}: {e}"),
                    }
                }
            }
            one => println!("{}", emit_plot_data(&cfg.output_dir, one)?.display()),
        },
        Command::ShowConfig => print!("{}", cfg.to_toml()?),
        Command::Verify => {
            let manifest = RunManifest::load_or_default(&cfg.output_dir)?;
            if manifest.stages.is_empty() {
                bail!("no manifest in {}", cfg.output_dir.display());
            }
            let stale = manifest.verify(&cfg.output_dir)?;
            if !stale.is_empty() {
                bail!("digest mismatch: {}", stale.join(", "));
            }
            println!("{} stages verified", manifest.stages.len());
        }
        _ => unreachable!("stage commands handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
