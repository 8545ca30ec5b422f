#![allow(dead_code)]

pub mod oracles;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use shoppers_core::lasso::{standardize_dense, DesignMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:03}")).collect()
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
}

/// Standardized design with `y = Σ coef_j x_j + noise·ε` where `coef` covers
/// the first `coef.len()` columns.
pub fn sparse_linear(seed: u64, n: usize, p: usize, coef: &[f64], noise: f64) -> DesignMatrix {
    let mut r = rng(seed);
    let raw = normal_matrix(&mut r, n, p);
    let tmp = standardize_dense(&raw, DVector::zeros(n), ids("r", n), ids("c", p)).unwrap();
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = StandardNormal.sample(&mut r);
        coef.iter().enumerate().map(|(j, c)| c * tmp.x[(i, j)]).sum::<f64>() + noise * e
    });
    standardize_dense(&raw, y, ids("r", n), ids("c", p)).unwrap()
}

/// Non-negative `W·H` with `k` factors; W is `n×k`, H is `k×m`.
pub fn planted_low_rank(seed: u64, n: usize, m: usize, k: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut r = rng(seed);
    let w = DMatrix::from_fn(n, k, |_, _| r.gen_range(0.0..1.0));
    let h = DMatrix::from_fn(k, m, |_, _| r.gen_range(0.0..1.0));
    let p = &w * &h;
    (p, w, h)
}

/// Two well-separated Gaussian blobs plus uniform background noise.
/// Returns points and the generating label (0, 1, or -1 for noise).
pub fn two_blobs_with_noise(seed: u64, per_blob: usize, n_noise: usize) -> (Vec<Vec<f64>>, Vec<i64>) {
    let mut r = rng(seed);
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for (label, centre) in [(0i64, [0.0, 0.0]), (1, [10.0, 10.0])] {
        for _ in 0..per_blob {
            let dx: f64 = StandardNormal.sample(&mut r);
            let dy: f64 = StandardNormal.sample(&mut r);
            pts.push(vec![centre[0] + 0.5 * dx, centre[1] + 0.5 * dy]);
            truth.push(label);
        }
    }
    for _ in 0..n_noise {
        pts.push(vec![r.gen_range(-25.0..35.0), r.gen_range(-25.0..35.0)]);
        truth.push(-1);
    }
    (pts, truth)
}

pub fn fixture_csv() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/online_retail_sample.csv")
}

pub fn fixture_config(output_dir: &std::path::Path) -> shoppers_core::pipeline::PipelineConfig {
    shoppers_core::pipeline::PipelineConfig {
        input: fixture_csv(),
        output_dir: output_dir.to_path_buf(),
        ..Default::default()
    }
}

/// Every file under `root`, relative path to bytes.
pub fn tree_bytes(root: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(root, root, &mut out);
    out
}
