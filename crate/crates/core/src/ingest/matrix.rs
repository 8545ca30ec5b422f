use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_csv_rows, CsvSink};

pub const TRIPLETS_FILE: &str = "triplets.csv";
pub const ROWS_FILE: &str = "rows.csv";
pub const COLS_FILE: &str = "cols.csv";

/// Sparse customer × item spend matrix in compressed-row form.
///
/// Row and column ids are sorted and unique; every stored value is
/// strictly positive and absent entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurchaseMatrix {
    rows: Vec<String>,
    cols: Vec<String>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

fn check_ids(ids: &[String], what: &str) -> Result<()> {
    if let Some(w) = ids.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!(
            "{what} ids must be sorted and unique (`{}` before `{}`)",
            w[0], w[1]
        )));
    }
    Ok(())
}

impl PurchaseMatrix {
    /// Builds a matrix from (row, col, value) triplets. Duplicate positions
    /// are summed and resulting zeros are dropped.
    pub fn from_triplets(
        rows: Vec<String>,
        cols: Vec<String>,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        check_ids(&rows, "row")?;
        check_ids(&cols, "column")?;
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (r, c, v) in triplets {
            if r >= rows.len() || c >= cols.len() {
                return Err(Error::Dimension(format!(
                    "entry ({r}, {c}) outside {}x{}",
                    rows.len(),
                    cols.len()
                )));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "entry ({r}, {c}) = {v} is not a finite non-negative value"
                )));
            }
            *acc.entry((r, c)).or_insert(0.0) += v;
        }
        let mut indptr = vec![0usize; rows.len() + 1];
        let mut indices = Vec::with_capacity(acc.len());
        let mut values = Vec::with_capacity(acc.len());
        for ((r, c), v) in acc {
            if v > 0.0 {
                indptr[r + 1] += 1;
                indices.push(c);
                values.push(v);
            }
        }
        for i in 0..rows.len() {
            indptr[i + 1] += indptr[i];
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Builds a matrix from a dense array, storing the positive entries.
    pub fn from_dense(rows: Vec<String>, cols: Vec<String>, dense: &DMatrix<f64>) -> Result<Self> {
        if dense.nrows() != rows.len() || dense.ncols() != cols.len() {
            return Err(Error::Dimension(format!(
                "dense {}x{} vs ids {}x{}",
                dense.nrows(),
                dense.ncols(),
                rows.len(),
                cols.len()
            )));
        }
        let trip = (0..dense.nrows())
            .flat_map(|i| (0..dense.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, dense[(i, j)]));
        Self::from_triplets(rows, cols, trip)
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.rows
    }

    pub fn col_ids(&self) -> &[String] {
        &self.cols
    }

    pub fn row_index(&self, id: &str) -> Option<usize> {
        self.rows.binary_search_by(|r| r.as_str().cmp(id)).ok()
    }

    pub fn col_index(&self, id: &str) -> Option<usize> {
        self.cols.binary_search_by(|c| c.as_str().cmp(id)).ok()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (lo, hi) = (self.indptr[row], self.indptr[row + 1]);
        match self.indices[lo..hi].binary_search(&col) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Stored entries of one row as (col, value).
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.indptr[row], self.indptr[row + 1]);
        self.indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows()).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols());
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }

    /// Restricts the matrix to the given column ids (kept in sorted order).
    pub fn select_columns(&self, keep: &[String]) -> Result<Self> {
        let mut keep: Vec<String> = keep.to_vec();
        keep.sort();
        keep.dedup();
        let mut remap = vec![None; self.ncols()];
        for (new, id) in keep.iter().enumerate() {
            let old = self
                .col_index(id)
                .ok_or_else(|| Error::IdMismatch(format!("unknown column `{id}`")))?;
            remap[old] = Some(new);
        }
        let trip: Vec<_> = self
            .iter()
            .filter_map(|(i, j, v)| remap[j].map(|nj| (i, nj, v)))
            .collect();
        Self::from_triplets(self.rows.clone(), keep, trip)
    }

    /// Writes `triplets.csv`, `rows.csv` and `cols.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut t = CsvSink::create(&dir.join(TRIPLETS_FILE), &["row_id", "col_id", "value"])?;
        for (i, j, v) in self.iter() {
            t.row(&[i.to_string(), j.to_string(), v.to_string()])?;
        }
        t.finish()?;
        let mut r = CsvSink::create(&dir.join(ROWS_FILE), &["row_id", "customer_id"])?;
        for (i, id) in self.rows.iter().enumerate() {
            r.row(&[i.to_string(), id.clone()])?;
        }
        r.finish()?;
        let mut c = CsvSink::create(&dir.join(COLS_FILE), &["col_id", "stock_code"])?;
        for (j, id) in self.cols.iter().enumerate() {
            c.row(&[j.to_string(), id.clone()])?;
        }
        c.finish()
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let rows = read_index(&dir.join(ROWS_FILE))?;
        let cols = read_index(&dir.join(COLS_FILE))?;
        let path = dir.join(TRIPLETS_FILE);
        let mut trip = Vec::new();
        for (n, rec) in read_csv_rows(&path)?.into_iter().enumerate() {
            let bad = || Error::Csv {
                path: path.clone(),
                row: Some(n as u64 + 1),
                message: "expected row_id,col_id,value".into(),
            };
            if rec.len() != 3 {
                return Err(bad());
            }
            let i: usize = rec[0].parse().map_err(|_| bad())?;
            let j: usize = rec[1].parse().map_err(|_| bad())?;
            let v: f64 = rec[2].parse().map_err(|_| bad())?;
            trip.push((i, j, v));
        }
        Self::from_triplets(rows, cols, trip)
    }
}

fn read_index(path: &Path) -> Result<Vec<String>> {
    read_csv_rows(path)?
        .into_iter()
        .enumerate()
        .map(|(n, rec)| match rec.as_slice() {
            [idx, id] if idx.parse::<usize>().ok() == Some(n) => Ok(id.clone()),
            _ => Err(Error::Csv {
                path: path.to_path_buf(),
                row: Some(n as u64 + 1),
                message: "index sidecar rows must be `position,id` in order".into(),
            }),
        })
        .collect()
}
