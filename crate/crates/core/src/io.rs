//! Delimited-file helpers shared by the stage artifacts.
//!
//! Floats are written with Rust's shortest round-trip formatting so that
//! re-reading and re-writing a file is byte-stable.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub struct CsvSink {
    path: std::path::PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvSink {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(BufWriter::new(file));
        writer
            .write_record(header)
            .map_err(|e| csv_write_error(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> Result<()> {
        self.writer
            .write_record(fields)
            .map_err(|e| csv_write_error(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn csv_write_error(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        row: None,
        message: e.to_string(),
    }
}

/// Reads a headed CSV file and returns the data rows.
pub fn read_csv_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read_csv_with_header(path)?.1)
}

pub fn read_csv_with_header(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        row: e.position().map(|p| p.record()),
        message: e.to_string(),
    };
    let header = rdr
        .headers()
        .map_err(err)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec.map_err(err)?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Writes a dense matrix with a header of column ids and a leading id column.
pub fn write_dense(
    path: &Path,
    corner: &str,
    row_ids: &[String],
    col_ids: &[String],
    m: &DMatrix<f64>,
) -> Result<()> {
    let mut header = vec![corner];
    header.extend(col_ids.iter().map(String::as_str));
    let mut sink = CsvSink::create(path, &header)?;
    for (i, id) in row_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend((0..m.ncols()).map(|j| m[(i, j)].to_string()));
        sink.row(&rec)?;
    }
    sink.finish()
}

pub struct DenseTable {
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    pub values: DMatrix<f64>,
}

pub fn read_dense(path: &Path) -> Result<DenseTable> {
    let (header, rows) = read_csv_with_header(path)?;
    let col_ids: Vec<String> = header.into_iter().skip(1).collect();
    let mut values = DMatrix::zeros(rows.len(), col_ids.len());
    let mut row_ids = Vec::with_capacity(rows.len());
    for (i, rec) in rows.iter().enumerate() {
        if rec.len() != col_ids.len() + 1 {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                row: Some(i as u64 + 1),
                message: format!("expected {} fields, found {}", col_ids.len() + 1, rec.len()),
            });
        }
        row_ids.push(rec[0].clone());
        for j in 0..col_ids.len() {
            values[(i, j)] = rec[j + 1].parse().map_err(|_| Error::Csv {
                path: path.to_path_buf(),
                row: Some(i as u64 + 1),
                message: format!("non-numeric value `{}`", rec[j + 1]),
            })?;
        }
    }
    Ok(DenseTable {
        row_ids,
        col_ids,
        values,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Lower-case hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
