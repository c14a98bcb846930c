use std::cmp::Ordering;

use crate::mask::{iou, BinaryMask, MaskError};
use crate::panoptic::{SegmentId, SegmentInfo};

/// One-to-one assignment between predicted and GT instances.
/// Indices refer to positions in the input slices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// `(pred index, gt index, IoU)`, in the order the pairs were taken.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

/// Greedy matching by descending IoU. Candidate pairs need IoU >= `min_iou`;
/// ties go to the lower GT segment id, then the lower prediction id.
pub fn match_greedy_by_iou(
    preds: &[(BinaryMask, SegmentInfo)],
    gts: &[(BinaryMask, SegmentInfo)],
    min_iou: f64,
) -> Result<Matching, MaskError> {
    let mut candidates: Vec<(f64, SegmentId, SegmentId, usize, usize)> = Vec::new();
    for (pi, (pm, ps)) in preds.iter().enumerate() {
        for (gi, (gm, gs)) in gts.iter().enumerate() {
            if pm.intersection_area(gm)? == 0 {
                continue;
            }
            let v = iou(pm, gm)?;
            if v >= min_iou {
                candidates.push((v, gs.segment_id, ps.segment_id, gi, pi));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for (v, _, _, gi, pi) in candidates {
        if pred_used[pi] || gt_used[gi] {
            continue;
        }
        pred_used[pi] = true;
        gt_used[gi] = true;
        pairs.push((pi, gi, v));
    }
    Ok(Matching {
        pairs,
        unmatched_preds: (0..preds.len()).filter(|&i| !pred_used[i]).collect(),
        unmatched_gts: (0..gts.len()).filter(|&i| !gt_used[i]).collect(),
    })
}
