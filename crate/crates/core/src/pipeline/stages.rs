use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDateTime;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::manifest::{FileDigest, RunManifest, StageEntry};
use super::{PipelineConfig, Stage, CONFIG_FILE};
use crate::cluster::{cluster_rows, profile_clusters, row_normalize, ClusterLabeling};
use crate::error::{Error, Result};
use crate::graph::{
    attach_embeddings, build_affinity_graph, build_purchase_graph, write_graphml, write_jsonl, GraphDocument,
    GRAPHML_FILE,
};
use crate::ingest::{
    build_incidence_matrix, clean_transactions, item_catalog, members_of, parse_invoice_csv, read_transactions,
    segment_customers, write_rejects, write_transactions, PurchaseMatrix, Segment, COLS_FILE, ROWS_FILE,
    TRIPLETS_FILE,
};
use crate::io::{read_csv_rows, read_dense, read_json, write_dense, write_json, write_text, CsvSink};
use crate::lasso::{
    cross_validate_alpha, default_alpha_grid, drop_experiment, fit_lasso, holdout_rows, residual_diagnostics,
    select_features, standardize,
};
use crate::nmf::{fit_nmf, grid_search, normalize_dictionary, top_items_per_element, Factorization, NmfConfig};
use crate::rfm::{compute_rfm_attributes, default_as_of, score_customers, skewness};

pub(crate) const TRANSACTIONS: &str = "ingest/transactions.csv";
pub(crate) const REJECTS: &str = "ingest/rejects.jsonl";
pub(crate) const SEGMENTS: &str = "ingest/segments.csv";
pub(crate) const ITEMS: &str = "ingest/items.csv";
pub(crate) const INGEST_MATRIX: &str = "ingest/matrix";
pub(crate) const ATTRIBUTES: &str = "rfm/attributes.csv";
pub(crate) const SCORES: &str = "rfm/scores.csv";
pub(crate) const BOXCOX: &str = "rfm/boxcox.json";
pub(crate) const CV_CURVE: &str = "select-features/cv_curve.csv";
pub(crate) const LASSO_MODEL: &str = "select-features/lasso.json";
pub(crate) const DROP_CURVE: &str = "select-features/drop_curve.csv";
pub(crate) const RANKING: &str = "select-features/ranking.csv";
pub(crate) const DIAGNOSTICS: &str = "select-features/diagnostics.json";
pub(crate) const PREDICTED: &str = "select-features/predicted_actual.csv";
pub(crate) const PP: &str = "select-features/pp.csv";
pub(crate) const REDUCED_MATRIX: &str = "select-features/matrix";
pub(crate) const GRID_TABLE: &str = "grid-search/grid.csv";
pub(crate) const GRID_BEST: &str = "grid-search/best.json";
pub(crate) const GRID_MASK: &str = "grid-search/holdout_mask.csv";
pub(crate) const W_FILE: &str = "factorize/w.csv";
pub(crate) const H_FILE: &str = "factorize/h.csv";
pub(crate) const TRACE: &str = "factorize/trace.csv";
pub(crate) const FIT: &str = "factorize/fit.json";
pub(crate) const DICTIONARY: &str = "factorize/dictionary.csv";
pub(crate) const LABELS: &str = "cluster/labels.csv";
pub(crate) const PROFILES: &str = "cluster/profiles.json";
pub(crate) const CENTROIDS: &str = "cluster/centroids.csv";
pub(crate) const PURCHASE_GRAPH: &str = "export-graph/purchase";
pub(crate) const AFFINITY_GRAPH: &str = "export-graph/affinity";

const DATE_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Fails with [`Error::MissingArtifact`] unless `relative` exists.
pub(crate) fn require(root: &Path, stage: Stage, required: Stage, relative: &str) -> Result<PathBuf> {
    let path = root.join(relative);
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact {
            stage: stage.to_string(),
            required: required.to_string(),
            path,
        })
    }
}

fn matrix_files(dir: &str) -> Vec<String> {
    [TRIPLETS_FILE, ROWS_FILE, COLS_FILE]
        .iter()
        .map(|f| format!("{dir}/{f}"))
        .collect()
}

fn f64_cell(v: f64) -> String {
    v.to_string()
}

/// Output of one stage body before timing and digests are attached.
struct StageOutput {
    inputs: Vec<String>,
    outputs: Vec<String>,
    metrics: BTreeMap<String, Value>,
}

/// Runs exactly one stage, writing its artifacts, the canonical config and
/// the updated manifest into `cfg.output_dir`.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<StageEntry> {
    cfg.validate()?;
    let root = cfg.output_dir.as_path();
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let config_text = cfg.to_toml()?;
    write_text(&root.join(CONFIG_FILE), &config_text)?;

    let start = Instant::now();
    let out = match stage {
        Stage::Ingest => ingest(root, cfg)?,
        Stage::Rfm => rfm(root, cfg)?,
        Stage::SelectFeatures => select(root, cfg)?,
        Stage::GridSearch => grid(root, cfg)?,
        Stage::Factorize => factorize(root, cfg)?,
        Stage::Cluster => cluster(root, cfg)?,
        Stage::ExportGraph => export(root, cfg)?,
    };
    let elapsed_ms = start.elapsed().as_millis() as u64;

    let digests = |files: &[String]| -> Result<Vec<FileDigest>> {
        files.iter().map(|f| FileDigest::of(root, f)).collect()
    };
    let entry = StageEntry {
        stage,
        inputs: digests(&out.inputs)?,
        outputs: digests(&out.outputs)?,
        elapsed_ms,
        metrics: out.metrics,
    };
    let mut manifest = RunManifest::load_or_default(root)?;
    manifest.config_sha256 = FileDigest::of(root, CONFIG_FILE)?.sha256;
    manifest.record(entry.clone());
    manifest.save(root)?;
    log::info!("stage {stage} finished in {elapsed_ms} ms");
    Ok(entry)
}

/// Runs every stage in order.
pub fn run_all(cfg: &PipelineConfig) -> Result<RunManifest> {
    for stage in Stage::ALL {
        run_stage(stage, cfg)?;
    }
    RunManifest::load_or_default(&cfg.output_dir)
}

fn ingest(root: &Path, cfg: &PipelineConfig) -> Result<StageOutput> {
    if !cfg.input.exists() {
        return Err(Error::invalid(format!("input file {} does not exist", cfg.input.display())));
    }
    let parsed = parse_invoice_csv(&cfg.input, &cfg.columns)?;
    let txns = clean_transactions(&parsed.lines, &cfg.cleaning);
    let segments = segment_customers(&txns, &cfg.segmentation);
    let frequent = members_of(&segments, Segment::Frequent);
    let matrix = build_incidence_matrix(&txns, &frequent)?;

    std::fs::create_dir_all(root.join(Stage::Ingest.dir())).map_err(|e| Error::io(root, e))?;
    write_transactions(&root.join(TRANSACTIONS), &txns)?;
    write_rejects(&root.join(REJECTS), &parsed.rejects)?;
    let mut seg = CsvSink::create(&root.join(SEGMENTS), &["customer_id", "segment", "n_purchases"])?;
    for s in &segments {
        let name = serde_json::to_value(s.segment)?;
        seg.row(&[s.customer_id.as_str(), name.as_str().unwrap_or_default(), &s.n_purchases.to_string()])?;
    }
    seg.finish()?;
    let mut items = CsvSink::create(&root.join(ITEMS), &["stock_code", "description"])?;
    for (code, desc) in item_catalog(&txns) {
        items.row(&[code, desc])?;
    }
    items.finish()?;
    matrix.write_dir(&root.join(INGEST_MATRIX))?;

    let count = |s: Segment| segments.iter().filter(|c| c.segment == s).count();
    let mut outputs = vec![TRANSACTIONS.to_string(), REJECTS.into(), SEGMENTS.into(), ITEMS.into()];
    outputs.extend(matrix_files(INGEST_MATRIX));
    Ok(StageOutput {
        inputs: Vec::new(),
        outputs,
        metrics: BTreeMap::from([
            ("input_sha256".into(), json!(crate::io::file_digest(&cfg.input)?)),
            ("lines".into(), json!(parsed.lines.len())),
            ("rejects".into(), json!(parsed.rejects.len())),
            ("transactions".into(), json!(txns.len())),
            ("customers".into(), json!(segments.len())),
            ("frequent".into(), json!(count(Segment::Frequent))),
            ("infrequent".into(), json!(count(Segment::Infrequent))),
            ("wholesale".into(), json!(count(Segment::Wholesale))),
            ("items".into(), json!(matrix.ncols())),
            ("nnz".into(), json!(matrix.nnz())),
        ]),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BoxCoxRecord {
    lambda: f64,
    shift: f64,
    as_of: String,
    skewness_before: f64,
    skewness_after: f64,
}

fn read_segments(path: &Path) -> Result<BTreeSet<String>> {
    Ok(read_csv_rows(path)?
        .into_iter()
        .filter(|r| r.get(1).map(String::as_str) == Some("frequent"))
        .map(|r| r[0].clone())
        .collect())
}

fn rfm(root: &Path, cfg: &PipelineConfig) -> Result<StageOutput> {
    let stage = Stage::Rfm;
    let txn_path = require(root, stage, Stage::Ingest, TRANSACTIONS)?;
    let seg_path = require(root, stage, Stage::Ingest, SEGMENTS)?;
    let txns = read_transactions(&txn_path)?;
    let frequent = read_segments(&seg_path)?;
    let as_of = match &cfg.rfm.as_of {
        Some(s) => NaiveDateTime::parse_from_str(s, DATE_FORMAT)
            .map_err(|e| Error::invalid(format!("rfm.as_of `{s}`: {e}")))?,
        None => default_as_of(&txns).ok_or_else(|| Error::invalid("no transactions to score"))?,
    };
    let members: Vec<_> = txns.into_iter().filter(|t| frequent.contains(&t.customer_id)).collect();
    let attrs = compute_rfm_attributes(&members, as_of)?;
    let (scores, params) = score_customers(&attrs, &cfg.rfm.weights, cfg.rfm.search)?;

    let mut a = CsvSink::create(&root.join(ATTRIBUTES), &["customer_id", "recency", "frequency", "monetary"])?;
    for r in &attrs {
        a.row(&[r.customer_id.clone(), f64_cell(r.recency), f64_cell(r.frequency), f64_cell(r.monetary)])?;
    }
    a.finish()?;
    let mut s = CsvSink::create(&root.join(SCORES), &["customer_id", "gamma", "gamma_prime"])?;
    for r in &scores {
        s.row(&[r.customer_id.clone(), f64_cell(r.gamma), f64_cell(r.gamma_prime)])?;
    }
    s.finish()?;
    let gamma: Vec<f64> = scores.iter().map(|r| r.gamma).collect();
    let gamma_prime: Vec<f64> = scores.iter().map(|r| r.gamma_prime).collect();
    let record = BoxCoxRecord {
        lambda: params.lambda,
        shift: params.shift,
        as_of: as_of.format(DATE_FORMAT).to_string(),
        skewness_before: skewness(&gamma),
        skewness_after: skewness(&gamma_prime),
    };
    write_json(&root.join(BOXCOX), &record)?;
    Ok(StageOutput {
        inputs: vec![TRANSACTIONS.into(), SEGMENTS.into()],
        outputs: vec![ATTRIBUTES.into(), SCORES.into(), BOXCOX.into()],
        metrics: BTreeMap::from([
            ("customers".into(), json!(scores.len())),
            ("lambda".into(), json!(record.lambda)),
            ("shift".into(), json!(record.shift)),
            ("skewness_before".into(), json!(record.skewness_before)),
            ("skewness_after".into(), json!(record.skewness_after)),
        ]),
    })
}

fn read_scores(path: &Path) -> Result<BTreeMap<String, f64>> {
    read_csv_rows(path)?
        .into_iter()
        .map(|r| {
            let v = r
                .get(2)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Csv {
                    path: path.to_path_buf(),
                    row: None,
                    message: "expected customer_id,gamma,gamma_prime".into(),
                })?;
            Ok((r[0].clone(), v))
        })
        .collect()
}

fn read_catalog(path: &Path) -> Result<BTreeMap<String, String>> {
    Ok(read_csv_rows(path)?
        .into_iter()
        .filter(|r| r.len() >= 2)
        .map(|r| (r[0].clone(), r[1].clone()))
        .collect())
}

fn select(root: &Path, cfg: &PipelineConfig) -> Result<StageOutput> {
    let stage = Stage::SelectFeatures;
    let matrix_dir = require(root, stage, Stage::Ingest, &format!("{INGEST_MATRIX}/{TRIPLETS_FILE}"))?;
    let items_path = require(root, stage, Stage::Ingest, ITEMS)?;
    let scores_path = require(root, stage, Stage::Rfm, SCORES)?;
    let p = PurchaseMatrix::read_dir(matrix_dir.parent().expect("matrix dir"))?;
    let responses = read_scores(&scores_path)?;
    let catalog = read_catalog(&items_path)?;
    let s = &cfg.lasso;

    let design = standardize(&p, &responses)?;
    let grid = match &s.alpha_grid {
        Some(g) => g.clone(),
        None => default_alpha_grid(&design, s.grid_size, s.grid_ratio),
    };
    let cv = cross_validate_alpha(&design, &grid, s.folds, s.seed, &s.solver)?;
    let model = fit_lasso(&design, cv.alpha_best, &s.solver)?;
    let holdout = holdout_rows(design.nrows(), s.holdout_fraction, s.seed);
    let curve = drop_experiment(&design, &model, &holdout)?;
    let ranking = select_features(&curve, &s.selection);
    let all_rows: Vec<usize> = (0..design.nrows()).collect();
    let diag = residual_diagnostics(&model, &design, &all_rows);
    let reduced = p.select_columns(&ranking.stock_codes())?;

    let mut c = CsvSink::create(&root.join(CV_CURVE), &["alpha", "mean_mse", "std_mse"])?;
    for pt in &cv.curve {
        c.row(&[f64_cell(pt.alpha), f64_cell(pt.mean_mse), f64_cell(pt.std_mse)])?;
    }
    c.finish()?;
    write_json(&root.join(LASSO_MODEL), &model)?;
    let mut d = CsvSink::create(&root.join(DROP_CURVE), &["n_features", "holdout_mse", "ridge"])?;
    for pt in &curve.points {
        d.row(&[pt.n_features.to_string(), f64_cell(pt.holdout_mse), pt.ridge.to_string()])?;
    }
    d.finish()?;
    let mut r = CsvSink::create(&root.join(RANKING), &["rank", "stock_code", "beta", "description"])?;
    for f in &ranking.features {
        let desc = catalog.get(&f.stock_code).cloned().unwrap_or_default();
        r.row(&[f.rank.to_string(), f.stock_code.clone(), f64_cell(f.beta), desc])?;
    }
    r.finish()?;
    write_json(
        &root.join(DIAGNOSTICS),
        &json!({
            "alpha_best": cv.alpha_best,
            "nnz": model.nnz(),
            "converged": model.converged,
            "selected_count": ranking.selected_count,
            "drop_order": curve.drop_order,
            "dropped_constant": design.dropped_constant,
            "mse": diag.mse,
            "explained_variance": diag.explained_variance,
            "max_pp_deviation": diag.max_pp_deviation,
            "degenerate_residuals": diag.degenerate,
        }),
    )?;
    let mut pa = CsvSink::create(&root.join(PREDICTED), &["customer_id", "predicted", "actual"])?;
    for pair in &diag.pairs {
        pa.row(&[design.row_ids[pair.row_id_index].clone(), f64_cell(pair.predicted), f64_cell(pair.actual)])?;
    }
    pa.finish()?;
    let mut pp = CsvSink::create(&root.join(PP), &["theoretical", "empirical"])?;
    for pt in &diag.pp {
        pp.row(&[f64_cell(pt.theoretical), f64_cell(pt.empirical)])?;
    }
    pp.finish()?;
    reduced.write_dir(&root.join(REDUCED_MATRIX))?;

    let mut inputs = matrix_files(INGEST_MATRIX);
    inputs.extend([ITEMS.to_string(), SCORES.to_string()]);
    let mut outputs = vec![
        CV_CURVE.to_string(),
        LASSO_MODEL.into(),
        DROP_CURVE.into(),
        RANKING.into(),
        DIAGNOSTICS.into(),
        PREDICTED.into(),
        PP.into(),
    ];
    outputs.extend(matrix_files(REDUCED_MATRIX));
    Ok(StageOutput {
        inputs,
        outputs,
        metrics: BTreeMap::from([
            ("alpha_best".into(), json!(cv.alpha_best)),
            ("lasso_nnz".into(), json!(model.nnz())),
            ("selected_count".into(), json!(ranking.selected_count)),
            ("explained_variance".into(), json!(diag.explained_variance)),
            ("design_rows".into(), json!(design.nrows())),
            ("design_columns".into(), json!(design.ncols())),
        ]),
    })
}

fn load_reduced(root: &Path, stage: Stage) -> Result<PurchaseMatrix> {
    let path = require(root, stage, Stage::SelectFeatures, &format!("{REDUCED_MATRIX}/{TRIPLETS_FILE}"))?;
    PurchaseMatrix::read_dir(path.parent().expect("matrix dir"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridBest {
    config: NmfConfig,
    imputation_mse: f64,
}

fn grid(root: &Path, cfg: &PipelineConfig) -> Result<StageOutput> {
    let p = load_reduced(root, Stage::GridSearch)?;
    let result = grid_search(&p, &cfg.nmf.grid, cfg.nmf.seed, &cfg.nmf.config())?;

    let mut t = CsvSink::create(
        &root.join(GRID_TABLE),
        &["k", "alpha_m", "l1_ratio", "imputation_mse", "converged", "error"],
    )?;
    for c in &result.table {
        t.row(&[
            c.k.to_string(),
            f64_cell(c.alpha_m),
            f64_cell(c.l1_ratio),
            c.imputation_mse.map(f64_cell).unwrap_or_default(),
            c.converged.to_string(),
            c.error.clone().unwrap_or_default(),
        ])?;
    }
    t.finish()?;
    write_json(
        &root.join(GRID_BEST),
        &GridBest {
            config: result.best,
            imputation_mse: result.best_mse,
        },
    )?;
    let mut m = CsvSink::create(&root.join(GRID_MASK), &["row", "col"])?;
    for &(i, j) in &result.mask.held_out {
        m.row(&[i.to_string(), j.to_string()])?;
    }
    m.finish()?;
    let failed = result.table.iter().filter(|c| c.error.is_some()).count();
    Ok(StageOutput {
        inputs: matrix_files(REDUCED_MATRIX),
        outputs: vec![GRID_TABLE.into(), GRID_BEST.into(), GRID_MASK.into()],
        metrics: BTreeMap::from([
            ("cells".into(), json!(result.table.len())),
            ("failed_cells".into(), json!(failed)),
            ("best_k".into(), json!(result.best.k)),
            ("best_alpha_m".into(), json!(result.best.alpha_m)),
            ("best_l1_ratio".into(), json!(result.best.l1_ratio)),
            ("best_mse".into(), json!(result.best_mse)),
        ]),
    })
}

fn element_ids(k: usize) -> Vec<String> {
    (0..k).map(crate::graph::element_id).collect()
}

fn factorize(root: &Path, cfg: &PipelineConfig) -> Result<StageOutput> {
    let stage = Stage::Factorize;
    let p = load_reduced(root, stage)?;
    let mut inputs = matrix_files(REDUCED_MATRIX);
    let mut nmf_cfg = cfg.nmf.config();
    if cfg.nmf.use_grid_best {
        let best: GridBest = read_json(&require(root, stage, Stage::GridSearch, GRID_BEST)?)?;
        nmf_cfg = NmfConfig {
            k: best.config.k,
            alpha_m: best.config.alpha_m,
            l1_ratio: best.config.l1_ratio,
            ..nmf_cfg
        };
        inputs.push(GRID_BEST.into());
    }
    let k_requested = nmf_cfg.k;
    nmf_cfg.k = nmf_cfg.k.min(p.nrows().min(p.ncols()));
    if nmf_cfg.k != k_requested {
        log::warn!("k = {k_requested} exceeds the matrix rank bound; using k = {}", nmf_cfg.k);
    }

    let f = fit_nmf(&p, &nmf_cfg, None)?;
    let norm = normalize_dictionary(&f);
    let w = norm.absorb(&f.w);
    let elements = element_ids(f.k());
    write_dense(&root.join(W_FILE), "customer_id", &f.row_ids, &elements, &w)?;
    write_dense(&root.join(H_FILE), "element", &elements, &f.col_ids, &norm.h)?;
    let mut t = CsvSink::create(&root.join(TRACE), &["iteration", "objective"])?;
    for (i, v) in f.objective_trace.iter().enumerate() {
        t.row(&[i.to_string(), f64_cell(*v)])?;
    }
    t.finish()?;
    let final_objective = f.objective_trace.last().copied().unwrap_or(f64::NAN);
    write_json(
        &root.join(FIT),
        &json!({
            "config": nmf_cfg,
            "k_requested": k_requested,
            "converged": f.converged,
            "n_iter": f.n_iter,
            "final_objective": final_objective,
            "h_sparsity": f.h_sparsity(),
            "zero_elements": norm.zero_rows,
        }),
    )?;
    let catalog = read_catalog(&root.join(ITEMS)).unwrap_or_default();
    let mut d = CsvSink::create(&root.join(DICTIONARY), &["element", "rank", "stock_code", "weight", "description"])?;
    for prof in top_items_per_element(&norm.h, &f.col_ids, cfg.nmf.top_items) {
        for (rank, (code, weight)) in prof.items.iter().filter(|(_, w)| *w > 0.0).enumerate() {
            let desc = catalog.get(code).cloned().unwrap_or_default();
            d.row(&[
                elements[prof.element].clone(),
                (rank + 1).to_string(),
                code.clone(),
                f64_cell(*weight),
                desc,
            ])?;
        }
    }
    d.finish()?;
    Ok(StageOutput {
        inputs,
        outputs: vec![W_FILE.into(), H_FILE.into(), TRACE.into(), FIT.into(), DICTIONARY.into()],
        metrics: BTreeMap::from([
            ("k".into(), json!(nmf_cfg.k)),
            ("k_requested".into(), json!(k_requested)),
            ("alpha_m".into(), json!(nmf_cfg.alpha_m)),
            ("l1_ratio".into(), json!(nmf_cfg.l1_ratio)),
            ("converged".into(), json!(f.converged)),
            ("n_iter".into(), json!(f.n_iter)),
            ("final_objective".into(), json!(final_objective)),
            ("h_sparsity".into(), json!(f.h_sparsity())),
        ]),
    })
}

/// Reads the factor files written by the factorize stage. The objective
/// trace is not restored.
pub fn load_factorization(root: &Path) -> Result<Factorization> {
    read_factorization(root, Stage::Cluster)
}

fn read_factorization(root: &Path, stage: Stage) -> Result<Factorization> {
    let w = read_dense(&require(root, stage, Stage::Factorize, W_FILE)?)?;
    let h = read_dense(&require(root, stage, Stage::Factorize, H_FILE)?)?;
    if w.col_ids.len() != h.row_ids.len() {
        return Err(Error::Dimension(format!(
            "w has {} elements, h has {}",
            w.col_ids.len(),
            h.row_ids.len()
        )));
    }
    Ok(Factorization {
        w: w.values,
        h: h.values,
        objective_trace: Vec::new(),
        converged: true,
        n_iter: 0,
        row_ids: w.row_ids,
        col_ids: h.col_ids,
    })
}

fn cluster(root: &Path, cfg: &PipelineConfig) -> Result<StageOutput> {
    let f = read_factorization(root, Stage::Cluster)?;
    let points = if cfg.cluster.row_normalize {
        row_normalize(&f.w)
    } else {
        f.w.clone()
    };
    let labels = cluster_rows(&points, &cfg.cluster.density)?;
    let profiles = profile_clusters(&labels, &f.w);

    let mut l = CsvSink::create(&root.join(LABELS), &["customer_id", "cluster"])?;
    for (id, c) in f.row_ids.iter().zip(&labels.labels) {
        l.row(&[id.clone(), c.to_string()])?;
    }
    l.finish()?;
    write_json(&root.join(PROFILES), &profiles)?;
    let elements = element_ids(f.k());
    let mut header = vec!["cluster", "size"];
    header.extend(elements.iter().map(String::as_str));
    let mut c = CsvSink::create(&root.join(CENTROIDS), &header)?;
    for prof in &profiles {
        let mut rec = vec![prof.cluster.to_string(), prof.size.to_string()];
        rec.extend(prof.normalized_centroid.iter().map(|v| f64_cell(*v)));
        c.row(&rec)?;
    }
    c.finish()?;
    let sizes: BTreeMap<String, usize> = labels.sizes.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    Ok(StageOutput {
        inputs: vec![W_FILE.into(), H_FILE.into()],
        outputs: vec![LABELS.into(), PROFILES.into(), CENTROIDS.into()],
        metrics: BTreeMap::from([
            ("n_clusters".into(), json!(labels.n_clusters)),
            ("noise".into(), json!(labels.noise)),
            ("sizes".into(), json!(sizes)),
        ]),
    })
}

/// Reads cluster labels in factorization row order.
pub fn load_labels(root: &Path, row_ids: &[String]) -> Result<ClusterLabeling> {
    let path = require(root, Stage::ExportGraph, Stage::Cluster, LABELS)?;
    let by_id: BTreeMap<String, i64> = read_csv_rows(&path)?
        .into_iter()
        .map(|r| {
            let label = r.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Csv {
                path: path.clone(),
                row: None,
                message: "expected customer_id,cluster".into(),
            })?;
            Ok((r[0].clone(), label))
        })
        .collect::<Result<_>>()?;
    let labels = row_ids
        .iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| Error::IdMismatch(format!("no cluster label for `{id}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusterLabeling::from_labels(labels))
}

fn median_positive(w: &DMatrix<f64>) -> f64 {
    let mut v: Vec<f64> = w.iter().copied().filter(|x| *x > 0.0).collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn write_graph(root: &Path, dir: &str, doc: &GraphDocument) -> Result<Vec<String>> {
    write_jsonl(doc, &root.join(dir))?;
    write_graphml(doc, &root.join(dir).join(GRAPHML_FILE))?;
    Ok([crate::graph::NODES_FILE, crate::graph::EDGES_FILE, GRAPHML_FILE]
        .iter()
        .map(|f| format!("{dir}/{f}"))
        .collect())
}

fn export(root: &Path, cfg: &PipelineConfig) -> Result<StageOutput> {
    let stage = Stage::ExportGraph;
    let p = load_reduced(root, stage)?;
    let f = read_factorization(root, stage)?;
    let labels = load_labels(root, &f.row_ids)?;
    let threshold = cfg.graph.affinity_threshold.unwrap_or_else(|| median_positive(&f.w));

    let purchase = attach_embeddings(&build_purchase_graph(&p), &f, Some(&labels))?;
    let affinity = attach_embeddings(&build_affinity_graph(&f, threshold), &f, Some(&labels))?;
    let mut outputs = write_graph(root, PURCHASE_GRAPH, &purchase)?;
    outputs.extend(write_graph(root, AFFINITY_GRAPH, &affinity)?);

    let mut inputs = matrix_files(REDUCED_MATRIX);
    inputs.extend([W_FILE.to_string(), H_FILE.into(), LABELS.into()]);
    Ok(StageOutput {
        inputs,
        outputs,
        metrics: BTreeMap::from([
            ("affinity_threshold".into(), json!(threshold)),
            ("purchase_nodes".into(), json!(purchase.nodes.len())),
            ("purchase_edges".into(), json!(purchase.edges.len())),
            ("affinity_nodes".into(), json!(affinity.nodes.len())),
            ("affinity_edges".into(), json!(affinity.edges.len())),
        ]),
    })
}
