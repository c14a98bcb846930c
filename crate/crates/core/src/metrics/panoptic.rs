use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::panoptic::{PanopticMap, SegmentId, VOID_ID};
use crate::taxonomy::{CategoryId, Taxonomy};

/// Matched/unmatched counts and the IoU sum of matched pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PqStats {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub iou_sum: f64,
}

impl PqStats {
    pub fn merge(&mut self, other: &Self) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.iou_sum += other.iou_sum;
    }

    pub fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    fn denom(&self) -> f64 {
        self.tp as f64 + 0.5 * self.fp as f64 + 0.5 * self.fn_ as f64
    }

    pub fn pq(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.iou_sum / self.denom())
    }

    pub fn sq(&self) -> Option<f64> {
        (!self.is_empty()).then(|| {
            if self.tp == 0 {
                0.0
            } else {
                self.iou_sum / self.tp as f64
            }
        })
    }

    pub fn rq(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.tp as f64 / self.denom())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanopticQuality {
    pub per_category: BTreeMap<CategoryId, PqStats>,
    /// Mean PQ over categories with at least one TP, FP or FN.
    pub pq: Option<f64>,
    pub sq: Option<f64>,
    pub rq: Option<f64>,
}

impl PanopticQuality {
    pub(crate) fn from_stats(per_category: BTreeMap<CategoryId, PqStats>) -> Self {
        let present: Vec<&PqStats> = per_category.values().filter(|s| !s.is_empty()).collect();
        let mean = |f: fn(&PqStats) -> Option<f64>| {
            (!present.is_empty()).then(|| present.iter().filter_map(|s| f(s)).sum::<f64>() / present.len() as f64)
        };
        let (pq, sq, rq) = (mean(PqStats::pq), mean(PqStats::sq), mean(PqStats::rq));
        Self {
            per_category,
            pq,
            sq,
            rq,
        }
    }
}

/// Per-category PQ counts for one image pair.
pub(crate) fn pq_stats(
    pred: &PanopticMap,
    gt: &PanopticMap,
    taxonomy: &Taxonomy,
    match_threshold: f64,
) -> BTreeMap<CategoryId, PqStats> {
    let void = taxonomy.void_id();
    let gt_lut = gt.category_lut(void);
    let pred_lut = pred.category_lut(void);

    let mut inter: HashMap<(SegmentId, SegmentId), u64> = HashMap::new();
    let mut pred_on_void: HashMap<SegmentId, u64> = HashMap::new();
    for (&p, &g) in pred.ids().iter().zip(gt.ids()) {
        if p == VOID_ID || pred_lut[p as usize] == void {
            continue;
        }
        if g == VOID_ID || gt_lut[g as usize] == void {
            *pred_on_void.entry(p).or_insert(0) += 1;
        } else {
            *inter.entry((p, g)).or_insert(0) += 1;
        }
    }

    let mut stats: BTreeMap<CategoryId, PqStats> = BTreeMap::new();
    let mut pred_matched: HashMap<SegmentId, bool> = HashMap::new();
    let mut gt_matched: HashMap<SegmentId, bool> = HashMap::new();

    let mut keys: Vec<_> = inter.iter().map(|(&k, &v)| (k, v)).collect();
    keys.sort_unstable();
    for ((p, g), n) in keys {
        let (ps, gs) = (
            pred.segment(p).expect("id in table"),
            gt.segment(g).expect("id in table"),
        );
        if ps.category_id != gs.category_id {
            continue;
        }
        let union = ps.area + gs.area - n - pred_on_void.get(&p).copied().unwrap_or(0);
        let v = n as f64 / union as f64;
        if v > match_threshold {
            let s = stats.entry(gs.category_id).or_default();
            s.tp += 1;
            s.iou_sum += v;
            pred_matched.insert(p, true);
            gt_matched.insert(g, true);
        }
    }
    for gs in gt.segments() {
        if gs.category_id == void || gt_matched.contains_key(&gs.segment_id) {
            continue;
        }
        stats.entry(gs.category_id).or_default().fn_ += 1;
    }
    for ps in pred.segments() {
        if ps.category_id == void || pred_matched.contains_key(&ps.segment_id) {
            continue;
        }
        let on_void = pred_on_void.get(&ps.segment_id).copied().unwrap_or(0);
        if on_void * 2 > ps.area {
            continue;
        }
        stats.entry(ps.category_id).or_default().fp += 1;
    }
    stats
}

pub fn panoptic_quality(
    pred: &PanopticMap,
    gt: &PanopticMap,
    taxonomy: &Taxonomy,
) -> Result<PanopticQuality, MetricsError> {
    pred.check_same_dims(gt)?;
    pred.validate(taxonomy)?;
    gt.validate(taxonomy)?;
    Ok(PanopticQuality::from_stats(pq_stats(pred, gt, taxonomy, 0.5)))
}
