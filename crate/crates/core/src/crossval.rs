//! K-fold splitting and mean ± std aggregation of per-fold reports.
//!
//! Shuffling uses ChaCha8 seeded through `seed_from_u64` and a Fisher-Yates
//! pass whose bounded draws are rejection-sampled from `next_u64`, so a split
//! depends only on the sorted image ids, `k` and `seed`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::EvaluationReport;

#[derive(Debug, Error)]
pub enum CrossvalError {
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
    #[error("{n} images cannot fill {k} folds")]
    TooFewImages { n: usize, k: usize },
    #[error("duplicate image id {0:?}")]
    DuplicateImage(String),
    #[error("aggregation needs at least 2 reports, got {0}")]
    TooFewReports(usize),
    #[error("metric {0:?} is missing from some folds")]
    KeyMismatch(String),
    #[error("fold index {fold} out of range for k = {k}")]
    FoldOutOfRange { fold: usize, k: usize },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub assignments: BTreeMap<String, usize>,
    pub k: usize,
    pub seed: u64,
}

/// Uniform draw in `0..n` without modulo bias.
fn bounded(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    let reject_below = n.wrapping_neg() % n;
    loop {
        let x = rng.next_u64();
        if x >= reject_below {
            return x % n;
        }
    }
}

pub fn kfold_split<S: AsRef<str>>(image_ids: &[S], k: usize, seed: u64) -> Result<SplitSpec, CrossvalError> {
    if k < 2 {
        return Err(CrossvalError::BadK(k));
    }
    let mut ids: Vec<&str> = image_ids.iter().map(AsRef::as_ref).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(CrossvalError::DuplicateImage(w[0].to_string()));
    }
    if ids.len() < k {
        return Err(CrossvalError::TooFewImages { n: ids.len(), k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..ids.len()).rev() {
        let j = bounded(&mut rng, i as u64 + 1) as usize;
        ids.swap(i, j);
    }
    let assignments = ids
        .into_iter()
        .enumerate()
        .map(|(pos, id)| (id.to_string(), pos % k))
        .collect();
    Ok(SplitSpec { assignments, k, seed })
}

impl SplitSpec {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("split serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, CrossvalError> {
        let spec: Self = serde_json::from_slice(bytes)?;
        if spec.k < 2 {
            return Err(CrossvalError::BadK(spec.k));
        }
        if let Some(&fold) = spec.assignments.values().find(|&&f| f >= spec.k) {
            return Err(CrossvalError::FoldOutOfRange { fold, k: spec.k });
        }
        Ok(spec)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Validation images of `fold`, ascending.
    pub fn fold(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub fold_values: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MetricAggregate {
    pub fn from_values(fold_values: Vec<f64>) -> Self {
        // sorted copy so the result does not depend on fold order
        let mut v = fold_values.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let (lo, hi) = (v[0], v[v.len() - 1]);
        let mean = (v.iter().sum::<f64>() / n).clamp(lo, hi);
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self {
            fold_values,
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub fold_count: usize,
    pub metrics: BTreeMap<String, MetricAggregate>,
}

/// Defined metrics of a report as `overall/<metric>` and
/// `category/<name>/<metric>` keys.
pub fn flatten_report(report: &EvaluationReport) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let o = &report.overall;
    let overall = [
        ("ap", o.ap),
        ("ap50", o.ap50),
        ("ap75", o.ap75),
        ("ar", o.ar),
        ("iou_bg", o.iou_bg),
        ("iou_defects", o.iou_defects),
        ("iou_fg", o.iou_fg),
        ("miou", o.miou),
        ("pq", o.pq),
        ("rq", o.rq),
        ("sq", o.sq),
    ];
    for (k, v) in overall {
        if let Some(v) = v {
            out.insert(format!("overall/{k}"), v);
        }
    }
    for c in &report.categories {
        let fields = [
            ("ap", c.ap),
            ("ap50", c.ap50),
            ("ap75", c.ap75),
            ("ar", c.ar),
            ("iou", c.iou),
            ("pq", c.pq),
            ("rq", c.rq),
            ("sq", c.sq),
        ];
        for (k, v) in fields {
            if let Some(v) = v {
                out.insert(format!("category/{}/{k}", c.name), v);
            }
        }
    }
    out
}

pub fn aggregate_values(folds: &[BTreeMap<String, f64>]) -> Result<AggregateReport, CrossvalError> {
    if folds.len() < 2 {
        return Err(CrossvalError::TooFewReports(folds.len()));
    }
    let keys: BTreeSet<&String> = folds.iter().flat_map(|f| f.keys()).collect();
    let mut metrics = BTreeMap::new();
    for key in keys {
        let values = folds
            .iter()
            .map(|f| f.get(key).copied())
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| CrossvalError::KeyMismatch(key.clone()))?;
        metrics.insert(key.clone(), MetricAggregate::from_values(values));
    }
    Ok(AggregateReport {
        fold_count: folds.len(),
        metrics,
    })
}

/// Removes keys that are not defined in every fold; returns the removed keys.
pub fn retain_common_keys(folds: &mut [BTreeMap<String, f64>]) -> Vec<String> {
    let all: BTreeSet<String> = folds.iter().flat_map(|f| f.keys().cloned()).collect();
    let partial: Vec<String> = all
        .into_iter()
        .filter(|k| folds.iter().any(|f| !f.contains_key(k)))
        .collect();
    for f in folds.iter_mut() {
        for k in &partial {
            f.remove(k);
        }
    }
    partial
}

pub fn aggregate(reports: &[EvaluationReport]) -> Result<AggregateReport, CrossvalError> {
    aggregate_values(&reports.iter().map(flatten_report).collect::<Vec<_>>())
}

impl AggregateReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("aggregate serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, CrossvalError> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

/// Table columns in display order with the metric key each one reads.
pub const TABLE_COLUMNS: [(&str, &str); 9] = [
    ("AP", "overall/ap"),
    ("AP@50", "overall/ap50"),
    ("AP@75", "overall/ap75"),
    ("AR", "overall/ar"),
    ("IoU (defects)", "overall/iou_defects"),
    ("IoU FG", "overall/iou_fg"),
    ("IoU BG", "overall/iou_bg"),
    ("mIoU", "overall/miou"),
    ("PQ", "overall/pq"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableLayout {
    Markdown,
    Csv,
}

/// Three decimals without the leading zero, e.g. `0.0816` -> `.082`.
pub fn format_value(v: f64) -> String {
    let s = format!("{v:.3}");
    match s.strip_prefix("0.") {
        Some(rest) => format!(".{rest}"),
        None => match s.strip_prefix("-0.") {
            Some(rest) => format!("-.{rest}"),
            None => s,
        },
    }
}

pub fn format_cell(m: &MetricAggregate) -> String {
    format!("{} ± {}", format_value(m.mean), format_value(m.std))
}

/// One row per labelled aggregate. Only columns defined in at least one
/// aggregate are shown; missing cells render as `-`.
pub fn render_table(rows: &[(String, AggregateReport)], layout: TableLayout) -> String {
    let cols: Vec<_> = TABLE_COLUMNS
        .iter()
        .filter(|(_, key)| rows.iter().any(|(_, a)| a.metrics.contains_key(*key)))
        .collect();
    let cells = |a: &AggregateReport| -> Vec<String> {
        cols.iter()
            .map(|(_, key)| a.metrics.get(*key).map_or_else(|| "-".to_string(), format_cell))
            .collect()
    };
    match layout {
        TableLayout::Markdown => {
            let mut s = String::new();
            let _ = write!(s, "| Model |");
            for (name, _) in &cols {
                let _ = write!(s, " {name} |");
            }
            s.push_str("\n|---|");
            s.push_str(&"---|".repeat(cols.len()));
            s.push('\n');
            for (label, a) in rows {
                let _ = write!(s, "| {label} |");
                for c in cells(a) {
                    let _ = write!(s, " {c} |");
                }
                s.push('\n');
            }
            s
        }
        TableLayout::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["model"];
            header.extend(cols.iter().map(|(name, _)| *name));
            w.write_record(&header).expect("in-memory write");
            for (label, a) in rows {
                let mut rec = vec![label.clone()];
                rec.extend(cells(a));
                w.write_record(&rec).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
        }
    }
}
