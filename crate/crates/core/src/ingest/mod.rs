//! Invoice-line ingestion: parsing, cleaning, customer segmentation and
//! construction of the customer × item spend matrix.

mod matrix;
mod parse;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use matrix::{PurchaseMatrix, COLS_FILE, ROWS_FILE, TRIPLETS_FILE};
pub use parse::{
    normalize_customer_id, parse_invoice_csv, parse_invoice_reader, write_rejects, ColumnMap,
    ParsedInvoices, RejectRecord,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvoiceLine {
    pub invoice_id: String,
    pub stock_code: String,
    pub description: String,
    pub quantity: i64,
    pub invoice_date: NaiveDateTime,
    pub unit_price: f64,
    pub customer_id: Option<String>,
    pub country: String,
}

/// A registered, non-cancelled, positive line item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanedTransaction {
    pub customer_id: String,
    pub stock_code: String,
    pub description: String,
    pub invoice_id: String,
    pub invoice_date: NaiveDateTime,
    pub quantity: i64,
    pub unit_price: f64,
    pub spend: f64,
    pub country: String,
}

impl From<&CleanedTransaction> for InvoiceLine {
    fn from(t: &CleanedTransaction) -> Self {
        InvoiceLine {
            invoice_id: t.invoice_id.clone(),
            stock_code: t.stock_code.clone(),
            description: t.description.clone(),
            quantity: t.quantity,
            invoice_date: t.invoice_date,
            unit_price: t.unit_price,
            customer_id: Some(t.customer_id.clone()),
            country: t.country.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningRules {
    /// Invoice ids starting with this prefix are cancellations.
    pub cancellation_prefix: String,
    /// Stock codes dropped outright (postage, manual adjustments, fees).
    pub excluded_stock_codes: Vec<String>,
}

impl Default for CleaningRules {
    fn default() -> Self {
        Self {
            cancellation_prefix: "C".into(),
            excluded_stock_codes: Vec::new(),
        }
    }
}

/// Keeps lines with a customer id, a non-cancellation invoice, a positive
/// quantity and a positive unit price. Returns are dropped, not netted.
pub fn clean_transactions(lines: &[InvoiceLine], rules: &CleaningRules) -> Vec<CleanedTransaction> {
    let excluded: BTreeSet<&str> = rules
        .excluded_stock_codes
        .iter()
        .map(String::as_str)
        .collect();
    lines
        .iter()
        .filter_map(|l| {
            let customer_id = l.customer_id.as_ref()?;
            if !rules.cancellation_prefix.is_empty()
                && l.invoice_id.starts_with(&rules.cancellation_prefix)
            {
                return None;
            }
            if l.quantity <= 0 || !(l.unit_price > 0.0) || excluded.contains(l.stock_code.as_str())
            {
                return None;
            }
            Some(CleanedTransaction {
                customer_id: customer_id.clone(),
                stock_code: l.stock_code.clone(),
                description: l.description.clone(),
                invoice_id: l.invoice_id.clone(),
                invoice_date: l.invoice_date,
                quantity: l.quantity,
                unit_price: l.unit_price,
                spend: l.quantity as f64 * l.unit_price,
                country: l.country.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Frequent,
    Infrequent,
    Wholesale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerSegment {
    pub customer_id: String,
    pub segment: Segment,
    /// Distinct invoice count.
    pub n_purchases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub frequent_min_purchases: usize,
    /// A customer with any invoice whose total quantity exceeds this is wholesale.
    pub wholesale_quantity_threshold: i64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            frequent_min_purchases: 5,
            wholesale_quantity_threshold: 300,
        }
    }
}

/// Partitions customers into wholesale, frequent and infrequent shoppers.
///
/// Wholesale is decided first; the rest are frequent when their distinct
/// invoice count reaches `frequent_min_purchases`. Output is sorted by id.
pub fn segment_customers(
    txns: &[CleanedTransaction],
    cfg: &SegmentationConfig,
) -> Vec<CustomerSegment> {
    let mut invoice_qty: BTreeMap<&str, BTreeMap<&str, i64>> = BTreeMap::new();
    for t in txns {
        *invoice_qty
            .entry(&t.customer_id)
            .or_default()
            .entry(&t.invoice_id)
            .or_insert(0) += t.quantity;
    }
    invoice_qty
        .into_iter()
        .map(|(customer, invoices)| {
            let n_purchases = invoices.len();
            let wholesale = invoices
                .values()
                .any(|&q| q > cfg.wholesale_quantity_threshold);
            let segment = if wholesale {
                Segment::Wholesale
            } else if n_purchases >= cfg.frequent_min_purchases {
                Segment::Frequent
            } else {
                Segment::Infrequent
            };
            CustomerSegment {
                customer_id: customer.to_string(),
                segment,
                n_purchases,
            }
        })
        .collect()
}

pub fn members_of(segments: &[CustomerSegment], segment: Segment) -> BTreeSet<String> {
    segments
        .iter()
        .filter(|s| s.segment == segment)
        .map(|s| s.customer_id.clone())
        .collect()
}

/// Sums spend per (customer, stock code) over the member customers.
pub fn build_incidence_matrix(
    txns: &[CleanedTransaction],
    members: &BTreeSet<String>,
) -> Result<PurchaseMatrix> {
    if members.is_empty() {
        return Err(Error::invalid("incidence matrix needs at least one member"));
    }
    let mut spend: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for t in txns.iter().filter(|t| members.contains(&t.customer_id)) {
        seen.insert(&t.customer_id);
        *spend.entry((&t.customer_id, &t.stock_code)).or_insert(0.0) += t.spend;
    }
    if let Some(missing) = members.iter().find(|m| !seen.contains(m.as_str())) {
        return Err(Error::invalid(format!(
            "member `{missing}` has no transactions"
        )));
    }
    let rows: Vec<String> = members.iter().cloned().collect();
    let cols: Vec<String> = spend
        .keys()
        .map(|(_, c)| c.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let row_at: HashMap<&str, usize> = rows.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
    let col_at: HashMap<&str, usize> = cols.iter().enumerate().map(|(j, c)| (c.as_str(), j)).collect();
    let trip: Vec<_> = spend
        .iter()
        .map(|((r, c), v)| (row_at[r], col_at[c], *v))
        .collect();
    PurchaseMatrix::from_triplets(rows, cols, trip)
}

/// Most common description per stock code (ties: lexicographically smallest).
pub fn item_catalog(txns: &[CleanedTransaction]) -> BTreeMap<String, String> {
    let mut counts: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for t in txns {
        *counts
            .entry(&t.stock_code)
            .or_default()
            .entry(&t.description)
            .or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|(code, descs)| {
            let best = descs
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(d, _)| d.to_string())
                .unwrap_or_default();
            (code.to_string(), best)
        })
        .collect()
}

pub fn write_transactions(path: &Path, txns: &[CleanedTransaction]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            row: None,
            message: e.to_string(),
        })?;
    for t in txns {
        w.serialize(t).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            row: None,
            message: e.to_string(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_transactions(path: &Path) -> Result<Vec<CleanedTransaction>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Csv {
            path: path.to_path_buf(),
            row: None,
            message: format!("{other:?}"),
        },
    })?;
    r.deserialize()
        .map(|rec| {
            rec.map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                row: e.position().map(|p| p.record()),
                message: e.to_string(),
            })
        })
        .collect()
}
