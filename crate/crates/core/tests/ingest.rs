mod common;

use std::collections::{BTreeMap, BTreeSet};

use shoppers_core::ingest::*;

fn fixture() -> ParsedInvoices {
    parse_invoice_csv(&common::fixture_csv(), &ColumnMap::default()).unwrap()
}

/// Straight from the raw file: frequent, non-wholesale customers and their
/// summed spend per item, without going through the library parser.
fn raw_group_by(min_purchases: usize, wholesale_above: i64) -> BTreeMap<(String, String), f64> {
    let mut rdr = csv::Reader::from_path(common::fixture_csv()).unwrap();
    let mut kept = Vec::new();
    for rec in rdr.records() {
        let r = rec.unwrap();
        let (inv, code, qty, date, price, cust) = (&r[0], &r[1], &r[3], &r[4], &r[5], &r[6]);
        let (Ok(qty), Ok(price)) = (qty.parse::<i64>(), price.parse::<f64>()) else {
            continue;
        };
        if cust.is_empty() || inv.starts_with('C') || qty <= 0 || price <= 0.0 || date.contains("not") {
            continue;
        }
        let cust = cust.trim_end_matches(".0").to_string();
        kept.push((cust, inv.to_string(), code.to_string(), qty, price));
    }
    let mut per_invoice: BTreeMap<(&str, &str), i64> = BTreeMap::new();
    for (c, i, _, q, _) in &kept {
        *per_invoice.entry((c, i)).or_default() += q;
    }
    let mut invoices: BTreeMap<&str, usize> = BTreeMap::new();
    let mut wholesale: BTreeSet<&str> = BTreeSet::new();
    for ((c, _), q) in &per_invoice {
        *invoices.entry(c).or_default() += 1;
        if *q > wholesale_above {
            wholesale.insert(c);
        }
    }
    let mut out = BTreeMap::new();
    for (c, _, code, q, p) in &kept {
        if invoices[c.as_str()] >= min_purchases && !wholesale.contains(c.as_str()) {
            *out.entry((c.clone(), code.clone())).or_insert(0.0) += *q as f64 * p;
        }
    }
    out
}

#[test]
fn fixture_rejects_malformed_rows() {
    let parsed = fixture();
    assert_eq!(parsed.rejects.len(), 3);
    let columns: BTreeSet<_> = parsed.rejects.iter().filter_map(|r| r.column.clone()).collect();
    assert_eq!(
        columns,
        BTreeSet::from(["Quantity".to_string(), "InvoiceDate".into(), "UnitPrice".into()])
    );
    let total = std::fs::read_to_string(common::fixture_csv()).unwrap().lines().count() - 1;
    assert_eq!(parsed.lines.len() + parsed.rejects.len(), total);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rejects.jsonl");
    write_rejects(&path, &parsed.rejects).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3);
    for line in text.lines() {
        let back: RejectRecord = serde_json::from_str(line).unwrap();
        assert!(!back.reason.is_empty());
    }
}

#[test]
fn fixture_matrix_matches_raw_group_by() {
    let parsed = fixture();
    let seg_cfg = SegmentationConfig::default();
    let txns = clean_transactions(&parsed.lines, &CleaningRules::default());
    let segments = segment_customers(&txns, &seg_cfg);
    let m = build_incidence_matrix(&txns, &members_of(&segments, Segment::Frequent)).unwrap();

    let want = raw_group_by(seg_cfg.frequent_min_purchases, seg_cfg.wholesale_quantity_threshold);
    let got: BTreeMap<(String, String), f64> = m
        .iter()
        .map(|(i, j, v)| ((m.row_ids()[i].clone(), m.col_ids()[j].clone()), v))
        .collect();
    assert_eq!(got.len(), want.len());
    for (key, v) in &want {
        assert!((got[key] - v).abs() <= 1e-9 * v.abs().max(1.0), "{key:?}: {} vs {v}", got[key]);
    }
    assert!(m.iter().all(|(_, _, v)| v > 0.0));
}

#[test]
fn segments_cover_every_registered_customer() {
    let parsed = fixture();
    let txns = clean_transactions(&parsed.lines, &CleaningRules::default());
    let segments = segment_customers(&txns, &SegmentationConfig::default());
    let customers: BTreeSet<_> = txns.iter().map(|t| t.customer_id.clone()).collect();
    assert_eq!(segments.len(), customers.len());
    let wholesale = members_of(&segments, Segment::Wholesale);
    assert_eq!(wholesale.len(), 2);
    assert!(txns.iter().all(|t| !t.invoice_id.starts_with('C') && t.quantity > 0));
    assert!(txns.iter().all(|t| !t.customer_id.ends_with(".0")));
}

#[test]
fn artifacts_round_trip() {
    let parsed = fixture();
    let txns = clean_transactions(&parsed.lines, &CleaningRules::default());
    let segments = segment_customers(&txns, &SegmentationConfig::default());
    let m = build_incidence_matrix(&txns, &members_of(&segments, Segment::Frequent)).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let tpath = dir.path().join("transactions.csv");
    write_transactions(&tpath, &txns).unwrap();
    assert_eq!(read_transactions(&tpath).unwrap(), txns);

    m.write_dir(&dir.path().join("m")).unwrap();
    let back = PurchaseMatrix::read_dir(&dir.path().join("m")).unwrap();
    assert_eq!(back, m);
    back.write_dir(&dir.path().join("m2")).unwrap();
    for f in [TRIPLETS_FILE, ROWS_FILE, COLS_FILE] {
        assert_eq!(
            std::fs::read(dir.path().join("m").join(f)).unwrap(),
            std::fs::read(dir.path().join("m2").join(f)).unwrap()
        );
    }
}

#[test]
fn custom_column_names() {
    let text = "inv;sku;qty;when;price;who\n1;A;2;2011-01-02 10:00:00;1.5;7\n";
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    std::fs::write(&path, text.replace(';', ",")).unwrap();
    let map = ColumnMap {
        invoice_id: "inv".into(),
        stock_code: "sku".into(),
        quantity: "qty".into(),
        invoice_date: "when".into(),
        unit_price: "price".into(),
        customer_id: "who".into(),
        ..Default::default()
    };
    let parsed = parse_invoice_csv(&path, &map).unwrap();
    assert_eq!(parsed.lines.len(), 1);
    assert_eq!(parsed.lines[0].customer_id.as_deref(), Some("7"));
    assert!(parse_invoice_csv(&path, &ColumnMap::default()).is_err());
}
