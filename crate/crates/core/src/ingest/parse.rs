use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::InvoiceLine;
use crate::error::{Error, Result};

/// Maps logical invoice fields onto CSV header names.
///
/// Defaults follow the UCI Online Retail export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub invoice_id: String,
    pub stock_code: String,
    pub description: String,
    pub quantity: String,
    pub invoice_date: String,
    pub unit_price: String,
    pub customer_id: String,
    pub country: String,
    /// chrono formats tried in order when parsing `invoice_date`.
    pub date_formats: Vec<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            invoice_id: "InvoiceNo".into(),
            stock_code: "StockCode".into(),
            description: "Description".into(),
            quantity: "Quantity".into(),
            invoice_date: "InvoiceDate".into(),
            unit_price: "UnitPrice".into(),
            customer_id: "CustomerID".into(),
            country: "Country".into(),
            date_formats: vec![
                "%Y-%m-%d %H:%M:%S".into(),
                "%Y-%m-%d %H:%M".into(),
                "%Y-%m-%dT%H:%M:%S".into(),
                "%m/%d/%Y %H:%M".into(),
                "%m/%d/%Y %H:%M:%S".into(),
            ],
        }
    }
}

/// A data row that could not be turned into an [`InvoiceLine`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectRecord {
    /// 1-based data row number (header excluded).
    pub row: u64,
    pub column: Option<String>,
    pub reason: String,
    pub raw: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedInvoices {
    pub lines: Vec<InvoiceLine>,
    pub rejects: Vec<RejectRecord>,
}

struct Indices {
    invoice_id: usize,
    stock_code: usize,
    description: Option<usize>,
    quantity: usize,
    invoice_date: usize,
    unit_price: usize,
    customer_id: usize,
    country: Option<usize>,
}

fn locate(headers: &csv::StringRecord, path: &Path, schema: &ColumnMap) -> Result<Indices> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| {
        find(name).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    Ok(Indices {
        invoice_id: need(&schema.invoice_id)?,
        stock_code: need(&schema.stock_code)?,
        description: find(&schema.description),
        quantity: need(&schema.quantity)?,
        invoice_date: need(&schema.invoice_date)?,
        unit_price: need(&schema.unit_price)?,
        customer_id: need(&schema.customer_id)?,
        country: find(&schema.country),
    })
}

/// Spreadsheet exports often render integer ids as floats ("17850.0").
pub fn normalize_customer_id(raw: &str) -> Option<String> {
    let id = raw.trim();
    if id.is_empty() {
        return None;
    }
    match id.strip_suffix(".0") {
        Some(head) if !head.is_empty() && head.bytes().all(|b| b.is_ascii_digit()) => {
            Some(head.to_string())
        }
        _ => Some(id.to_string()),
    }
}

fn parse_date(raw: &str, formats: &[String]) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    formats
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
}

fn parse_row(
    record: &csv::StringRecord,
    idx: &Indices,
    schema: &ColumnMap,
) -> std::result::Result<InvoiceLine, (String, String)> {
    let field = |i: usize, name: &str| {
        record
            .get(i)
            .map(str::trim)
            .ok_or_else(|| (name.to_string(), "field missing".to_string()))
    };
    let invoice_id = field(idx.invoice_id, &schema.invoice_id)?;
    if invoice_id.is_empty() {
        return Err((schema.invoice_id.clone(), "empty invoice id".into()));
    }
    let stock_code = field(idx.stock_code, &schema.stock_code)?;
    if stock_code.is_empty() {
        return Err((schema.stock_code.clone(), "empty stock code".into()));
    }
    let quantity_raw = field(idx.quantity, &schema.quantity)?;
    let quantity: i64 = quantity_raw.parse().map_err(|_| {
        (
            schema.quantity.clone(),
            format!("non-integer quantity `{quantity_raw}`"),
        )
    })?;
    let price_raw = field(idx.unit_price, &schema.unit_price)?;
    let unit_price: f64 = price_raw
        .parse()
        .ok()
        .filter(|p: &f64| p.is_finite())
        .ok_or_else(|| {
            (
                schema.unit_price.clone(),
                format!("non-numeric unit price `{price_raw}`"),
            )
        })?;
    let date_raw = field(idx.invoice_date, &schema.invoice_date)?;
    let invoice_date = parse_date(date_raw, &schema.date_formats).ok_or_else(|| {
        (
            schema.invoice_date.clone(),
            format!("unparseable date `{date_raw}`"),
        )
    })?;
    let customer_id = normalize_customer_id(field(idx.customer_id, &schema.customer_id)?);
    let optional = |i: Option<usize>| {
        i.and_then(|i| record.get(i))
            .map(|s| s.trim().to_string())
            .unwrap_or_default()
    };
    Ok(InvoiceLine {
        invoice_id: invoice_id.to_string(),
        stock_code: stock_code.to_string(),
        description: optional(idx.description),
        quantity,
        invoice_date,
        unit_price,
        customer_id,
        country: optional(idx.country),
    })
}

/// Reads invoice lines from a headed CSV file.
///
/// Rows that fail field validation land in the reject report; a missing
/// file, a missing mandatory column or bytes that are not UTF-8 abort.
pub fn parse_invoice_csv(path: &Path, schema: &ColumnMap) -> Result<ParsedInvoices> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_invoice_reader(file, path, schema)
}

pub fn parse_invoice_reader<R: std::io::Read>(
    reader: R,
    path: &Path,
    schema: &ColumnMap,
) -> Result<ParsedInvoices> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            row: Some(0),
            message: "missing header row".into(),
        });
    }
    let idx = locate(&headers, path, schema)?;

    let mut out = ParsedInvoices::default();
    let mut record = csv::StringRecord::new();
    let mut row = 0u64;
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(path, e)),
        }
        row += 1;
        match parse_row(&record, &idx, schema) {
            Ok(line) => out.lines.push(line),
            Err((column, reason)) => out.rejects.push(RejectRecord {
                row,
                column: Some(column),
                reason,
                raw: record.iter().map(str::to_string).collect(),
            }),
        }
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map(|p| p.record());
    let message = match e.kind() {
        csv::ErrorKind::Utf8 { err, .. } => {
            format!("invalid UTF-8 in field {}: {err}", err.field())
        }
        _ => e.to_string(),
    };
    Error::Csv {
        path: path.to_path_buf(),
        row,
        message,
    }
}

/// Writes the reject report as one JSON object per line.
pub fn write_rejects(path: &Path, rejects: &[RejectRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in rejects {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
