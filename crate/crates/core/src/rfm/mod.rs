//! Customer value: normalised Recency / Frequency / Monetary attributes,
//! their weighted score and the Box-Cox normalisation of that score.

mod boxcox;
pub mod optimize;

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::CleanedTransaction;

pub use boxcox::{
    boxcox_lambda_mle, boxcox_log_likelihood, boxcox_transform, skewness, BoxCoxParams,
    SearchInterval, LOG_BRANCH_THRESHOLD, SHIFT_EPSILON,
};

/// Attributes scaled to [0, 1]; larger is better for all three.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfmAttributes {
    pub customer_id: String,
    pub recency: f64,
    pub frequency: f64,
    pub monetary: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct RfmWeights {
    recency: f64,
    frequency: f64,
    monetary: f64,
}

#[derive(Serialize, Deserialize)]
struct RawWeights {
    recency: f64,
    frequency: f64,
    monetary: f64,
}

impl TryFrom<RawWeights> for RfmWeights {
    type Error = Error;
    fn try_from(w: RawWeights) -> Result<Self> {
        RfmWeights::new(w.recency, w.frequency, w.monetary)
    }
}

impl From<RfmWeights> for RawWeights {
    fn from(w: RfmWeights) -> Self {
        RawWeights {
            recency: w.recency,
            frequency: w.frequency,
            monetary: w.monetary,
        }
    }
}

impl RfmWeights {
    /// Weights must be non-negative and sum to one (within 1e-9).
    pub fn new(recency: f64, frequency: f64, monetary: f64) -> Result<Self> {
        let all = [recency, frequency, monetary];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("RFM weights must be finite and non-negative"));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("RFM weights sum to {sum}, not 1")));
        }
        Ok(Self {
            recency,
            frequency,
            monetary,
        })
    }

    pub fn recency(&self) -> f64 {
        self.recency
    }
    pub fn frequency(&self) -> f64 {
        self.frequency
    }
    pub fn monetary(&self) -> f64 {
        self.monetary
    }
}

impl Default for RfmWeights {
    fn default() -> Self {
        Self {
            recency: 0.15,
            frequency: 0.15,
            monetary: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfmScore {
    pub customer_id: String,
    pub gamma: f64,
    pub gamma_prime: f64,
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![1.0; values.len()]
    }
}

/// Per-customer attributes, min-max scaled over the customers present in
/// `txns`. Recency is `1 - scaled(days since last purchase)`; a zero range
/// maps every customer to 1.0. Output is sorted by customer id.
pub fn compute_rfm_attributes(
    txns: &[CleanedTransaction],
    as_of: NaiveDateTime,
) -> Result<Vec<RfmAttributes>> {
    if txns.is_empty() {
        return Err(Error::invalid("RFM needs at least one transaction"));
    }
    struct Acc<'a> {
        last: NaiveDateTime,
        invoices: BTreeSet<&'a str>,
        spend: f64,
    }
    let mut per: BTreeMap<&str, Acc> = BTreeMap::new();
    for t in txns {
        if t.invoice_date > as_of {
            return Err(Error::invalid(format!(
                "transaction {} dated {} is after as-of {as_of}",
                t.invoice_id, t.invoice_date
            )));
        }
        let acc = per.entry(&t.customer_id).or_insert_with(|| Acc {
            last: t.invoice_date,
            invoices: BTreeSet::new(),
            spend: 0.0,
        });
        acc.last = acc.last.max(t.invoice_date);
        acc.invoices.insert(&t.invoice_id);
        acc.spend += t.spend;
    }
    // negated so that the most recent customer scales to 1
    let recency: Vec<f64> = per
        .values()
        .map(|a| -((as_of - a.last).num_seconds() as f64) / 86_400.0)
        .collect();
    let freq: Vec<f64> = per.values().map(|a| a.invoices.len() as f64).collect();
    let money: Vec<f64> = per.values().map(|a| a.spend).collect();
    let (recency, freq, money) = (min_max(&recency), min_max(&freq), min_max(&money));
    Ok(per
        .keys()
        .enumerate()
        .map(|(i, id)| RfmAttributes {
            customer_id: id.to_string(),
            recency: recency[i],
            frequency: freq[i],
            monetary: money[i],
        })
        .collect())
}

/// Weighted RFM score `w_r R + w_f F + w_m M`.
pub fn weighted_rfm_score(attrs: &RfmAttributes, weights: &RfmWeights) -> f64 {
    weights.recency * attrs.recency
        + weights.frequency * attrs.frequency
        + weights.monetary * attrs.monetary
}

/// Scores every customer, fits λ by maximum likelihood and transforms.
pub fn score_customers(
    attrs: &[RfmAttributes],
    weights: &RfmWeights,
    search: SearchInterval,
) -> Result<(Vec<RfmScore>, BoxCoxParams)> {
    let gamma: Vec<f64> = attrs.iter().map(|a| weighted_rfm_score(a, weights)).collect();
    let params = boxcox_lambda_mle(&gamma, search)?;
    let scores = attrs
        .iter()
        .zip(&gamma)
        .map(|(a, &g)| {
            Ok(RfmScore {
                customer_id: a.customer_id.clone(),
                gamma: g,
                gamma_prime: boxcox_transform(g, &params)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((scores, params))
}

/// Default as-of date: one day after the latest transaction.
pub fn default_as_of(txns: &[CleanedTransaction]) -> Option<NaiveDateTime> {
    txns.iter()
        .map(|t| t.invoice_date)
        .max()
        .map(|d| d + chrono::Duration::days(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn day(d: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2011, 3, d)
            .unwrap()
            .and_hms_opt(12, 0, 0)
            .unwrap()
    }

    fn txn(cust: &str, inv: &str, d: u32, spend: f64) -> CleanedTransaction {
        CleanedTransaction {
            customer_id: cust.into(),
            stock_code: "A".into(),
            description: String::new(),
            invoice_id: inv.into(),
            invoice_date: day(d),
            quantity: 1,
            unit_price: spend,
            spend,
            country: "UK".into(),
        }
    }

    #[test]
    fn single_customer_is_all_ones() {
        let a = compute_rfm_attributes(&[txn("c", "1", 1, 5.0)], day(10)).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!((a[0].recency, a[0].frequency, a[0].monetary), (1.0, 1.0, 1.0));
    }

    #[test]
    fn dominating_customer_gets_ones() {
        let txns = vec![
            txn("top", "1", 20, 50.0),
            txn("top", "2", 21, 50.0),
            txn("low", "3", 2, 5.0),
        ];
        let a = compute_rfm_attributes(&txns, day(25)).unwrap();
        let low = &a[0];
        let top = &a[1];
        assert_eq!((top.recency, top.frequency, top.monetary), (1.0, 1.0, 1.0));
        assert_eq!((low.recency, low.frequency, low.monetary), (0.0, 0.0, 0.0));
    }

    #[test]
    fn five_customer_table() {
        // as-of day 30; raw (days since last, invoices, spend):
        // a: (29, 1, 10)  b: (20, 2, 30)  c: (10, 3, 60)  d: (5, 2, 110)  e: (1, 5, 20)
        let txns = vec![
            txn("a", "a1", 1, 10.0),
            txn("b", "b1", 5, 10.0),
            txn("b", "b2", 10, 20.0),
            txn("c", "c1", 12, 20.0),
            txn("c", "c2", 15, 20.0),
            txn("c", "c3", 20, 20.0),
            txn("d", "d1", 3, 100.0),
            txn("d", "d2", 25, 10.0),
            txn("e", "e1", 2, 4.0),
            txn("e", "e2", 9, 4.0),
            txn("e", "e3", 14, 4.0),
            txn("e", "e4", 22, 4.0),
            txn("e", "e5", 29, 4.0),
        ];
        let a = compute_rfm_attributes(&txns, day(30)).unwrap();
        // recency = 1 - (days - 1) / 28; frequency = (n - 1) / 4; monetary = (s - 10) / 100
        let expect = [
            ("a", 0.0, 0.0, 0.0),
            ("b", 1.0 - 19.0 / 28.0, 0.25, 0.2),
            ("c", 1.0 - 9.0 / 28.0, 0.5, 0.5),
            ("d", 1.0 - 4.0 / 28.0, 0.25, 1.0),
            ("e", 1.0, 1.0, 0.1),
        ];
        for (got, (id, r, f, m)) in a.iter().zip(expect) {
            assert_eq!(got.customer_id, id);
            assert!((got.recency - r).abs() < 1e-12, "{id} r");
            assert!((got.frequency - f).abs() < 1e-12, "{id} f");
            assert!((got.monetary - m).abs() < 1e-12, "{id} m");
        }
    }

    #[test]
    fn empty_input_and_future_dates_rejected() {
        assert!(compute_rfm_attributes(&[], day(1)).is_err());
        assert!(compute_rfm_attributes(&[txn("c", "1", 10, 1.0)], day(5)).is_err());
    }

    #[test]
    fn score_examples() {
        let w = RfmWeights::new(0.15, 0.15, 0.7).unwrap();
        let at = |r, f, m| RfmAttributes {
            customer_id: "x".into(),
            recency: r,
            frequency: f,
            monetary: m,
        };
        assert!((weighted_rfm_score(&at(1.0, 1.0, 1.0), &w) - 1.0).abs() < 1e-12);
        assert_eq!(weighted_rfm_score(&at(0.0, 0.0, 0.0), &w), 0.0);
        assert!((weighted_rfm_score(&at(0.5, 0.2, 0.8), &w) - 0.665).abs() < 1e-12);
    }

    #[test]
    fn weights_validation() {
        assert!(RfmWeights::new(0.5, 0.5, 0.1).is_err());
        assert!(RfmWeights::new(-0.1, 0.4, 0.7).is_err());
        let w: RfmWeights = toml::from_str("recency = 0.2\nfrequency = 0.3\nmonetary = 0.5").unwrap();
        assert_eq!(w.monetary(), 0.5);
        assert!(toml::from_str::<RfmWeights>("recency = 0.9\nfrequency = 0.3\nmonetary = 0.5").is_err());
    }

    proptest! {
        #[test]
        fn score_is_affine_and_bounded(
            r in 0.0f64..=1.0, f in 0.0f64..=1.0, m in 0.0f64..=1.0,
            a in 0.0f64..1.0, b in 0.0f64..1.0, dr in 0.0f64..=1.0,
        ) {
            let (wr, wf) = (a * (1.0 - b), b * (1.0 - a));
            let w = RfmWeights::new(wr, wf, 1.0 - wr - wf).unwrap();
            let at = |r| RfmAttributes { customer_id: String::new(), recency: r, frequency: f, monetary: m };
            let s = weighted_rfm_score(&at(r), &w);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&s));
            // affine in recency: the slope is the weight
            let s2 = weighted_rfm_score(&at(dr), &w);
            prop_assert!((s2 - s - w.recency() * (dr - r)).abs() < 1e-12);
        }
    }
}
