use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::panoptic::PanopticMap;
use crate::taxonomy::{CategoryId, Taxonomy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticIou {
    pub per_category: BTreeMap<CategoryId, f64>,
    /// Mean over categories present in GT or prediction; `None` when none are.
    pub miou: Option<f64>,
}

/// Pixel intersection and union counts per category.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct SemanticCounts {
    pub inter: BTreeMap<CategoryId, u64>,
    pub union: BTreeMap<CategoryId, u64>,
}

impl SemanticCounts {
    pub fn compute(pred: &PanopticMap, gt: &PanopticMap, taxonomy: &Taxonomy) -> Self {
        let void = taxonomy.void_id();
        let pred_lut = pred.category_lut(void);
        let gt_lut = gt.category_lut(void);
        let mut inter = BTreeMap::new();
        let mut union = BTreeMap::new();
        for (&p, &g) in pred.ids().iter().zip(gt.ids()) {
            let g = gt_lut[g as usize];
            if g == void {
                continue;
            }
            let p = pred_lut[p as usize];
            *union.entry(g).or_insert(0) += 1;
            if p == g {
                *inter.entry(g).or_insert(0) += 1;
            } else if p != void {
                *union.entry(p).or_insert(0) += 1;
            }
        }
        Self { inter, union }
    }

    pub fn merge(&mut self, other: &Self) {
        for (&c, &n) in &other.inter {
            *self.inter.entry(c).or_insert(0) += n;
        }
        for (&c, &n) in &other.union {
            *self.union.entry(c).or_insert(0) += n;
        }
    }

    pub fn iou(&self, c: CategoryId) -> Option<f64> {
        let u = *self.union.get(&c)?;
        (u > 0).then(|| self.inter.get(&c).copied().unwrap_or(0) as f64 / u as f64)
    }

    pub fn finish(&self) -> SemanticIou {
        let per_category: BTreeMap<_, _> = self.union.keys().filter_map(|&c| self.iou(c).map(|v| (c, v))).collect();
        let miou = (!per_category.is_empty()).then(|| per_category.values().sum::<f64>() / per_category.len() as f64);
        SemanticIou { per_category, miou }
    }
}

/// Per-category IoU of the semantic projections, ignoring GT-void pixels.
pub fn semantic_iou(pred: &PanopticMap, gt: &PanopticMap, taxonomy: &Taxonomy) -> Result<SemanticIou, MetricsError> {
    pred.check_same_dims(gt)?;
    pred.validate(taxonomy)?;
    gt.validate(taxonomy)?;
    Ok(SemanticCounts::compute(pred, gt, taxonomy).finish())
}
