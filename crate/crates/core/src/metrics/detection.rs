use std::cmp::Ordering;

use crate::mask::{iou, BinaryMask, MaskError};
use crate::panoptic::{SegmentId, SegmentInfo};

/// A ranked prediction with its match outcome at each evaluated threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub score: f64,
    pub area: u64,
    pub segment_id: SegmentId,
    pub image_rank: usize,
    /// `matched[t]` is true when the prediction is a TP at threshold `t`.
    pub matched: Vec<bool>,
}

/// Score descending, then area descending, then segment id, then image order.
pub(crate) fn rank_order(
    (sa, aa, ia, ra): (f64, u64, SegmentId, usize),
    (sb, ab, ib, rb): (f64, u64, SegmentId, usize),
) -> Ordering {
    sb.partial_cmp(&sa)
        .unwrap_or(Ordering::Equal)
        .then(ab.cmp(&aa))
        .then(ia.cmp(&ib))
        .then(ra.cmp(&rb))
}

pub(crate) fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        rank_order(
            (a.score, a.area, a.segment_id, a.image_rank),
            (b.score, b.area, b.segment_id, b.image_rank),
        )
    });
}

/// Matches one image's predictions against its GT instances.
///
/// `ious[p][g]` is the IoU between prediction `p` and GT `g`; GT instances
/// must be given in ascending id order so that ties resolve to the lower id.
/// Returns one detection per prediction, in rank order, plus the number of
/// matched GTs at each threshold.
pub(crate) fn match_image(
    preds: &[SegmentInfo],
    ious: &[Vec<f64>],
    gt_count: usize,
    thresholds: &[f64],
    image_rank: usize,
) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        let key = |i: usize| {
            let p = &preds[i];
            (p.score.unwrap_or(1.0), p.area, p.segment_id, image_rank)
        };
        rank_order(key(a), key(b))
    });
    let mut dets: Vec<Detection> = order
        .iter()
        .map(|&i| Detection {
            score: preds[i].score.unwrap_or(1.0),
            area: preds[i].area,
            segment_id: preds[i].segment_id,
            image_rank,
            matched: vec![false; thresholds.len()],
        })
        .collect();
    for (ti, &t) in thresholds.iter().enumerate() {
        let mut gt_used = vec![false; gt_count];
        for (d, &pi) in order.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for (gi, &v) in ious[pi].iter().enumerate() {
                if gt_used[gi] || v < t {
                    continue;
                }
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((gi, v));
                }
            }
            if let Some((gi, _)) = best {
                gt_used[gi] = true;
                dets[d].matched[ti] = true;
            }
        }
    }
    dets
}

/// Interpolated AP over `points` evenly spaced recall levels for detections
/// already in rank order. `None` when there is no GT instance.
pub fn interpolated_ap(dets: &[Detection], threshold_index: usize, gt_count: usize, points: usize) -> Option<f64> {
    if gt_count == 0 {
        return None;
    }
    let mut precision = Vec::with_capacity(dets.len());
    let mut recall = Vec::with_capacity(dets.len());
    let (mut tp, mut fp) = (0u64, 0u64);
    for d in dets {
        if d.matched[threshold_index] {
            tp += 1;
        } else {
            fp += 1;
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / gt_count as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut sum = 0.0;
    for k in 0..points {
        let r = k as f64 / (points - 1) as f64;
        let i = recall.partition_point(|&rc| rc < r);
        if i < precision.len() {
            sum += precision[i];
        }
    }
    Some(sum / points as f64)
}

pub(crate) fn recall_at(dets: &[Detection], threshold_index: usize, gt_count: usize) -> Option<f64> {
    if gt_count == 0 {
        return None;
    }
    let tp = dets.iter().filter(|d| d.matched[threshold_index]).count();
    Some(tp as f64 / gt_count as f64)
}

fn iou_matrix(
    preds: &[(BinaryMask, SegmentInfo)],
    gts: &[(BinaryMask, SegmentInfo)],
) -> Result<(Vec<SegmentInfo>, Vec<Vec<f64>>), MaskError> {
    let mut gts: Vec<&(BinaryMask, SegmentInfo)> = gts.iter().collect();
    gts.sort_by_key(|g| g.1.segment_id);
    let ious = preds
        .iter()
        .map(|(pm, _)| gts.iter().map(|(gm, _)| iou(pm, gm)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok((preds.iter().map(|p| p.1.clone()).collect(), ious))
}

/// AP at one IoU threshold for a single image and category.
pub fn average_precision(
    preds: &[(BinaryMask, SegmentInfo)],
    gts: &[(BinaryMask, SegmentInfo)],
    threshold: f64,
) -> Result<Option<f64>, MaskError> {
    let (infos, ious) = iou_matrix(preds, gts)?;
    let dets = match_image(&infos, &ious, gts.len(), &[threshold], 0);
    Ok(interpolated_ap(&dets, 0, gts.len(), 101))
}

/// Mean recall over `thresholds` for a single image and category.
pub fn average_recall(
    preds: &[(BinaryMask, SegmentInfo)],
    gts: &[(BinaryMask, SegmentInfo)],
    thresholds: &[f64],
) -> Result<Option<f64>, MaskError> {
    if gts.is_empty() {
        return Ok(None);
    }
    let (infos, ious) = iou_matrix(preds, gts)?;
    let dets = match_image(&infos, &ious, gts.len(), thresholds, 0);
    let sum: f64 = (0..thresholds.len())
        .map(|t| recall_at(&dets, t, gts.len()).unwrap_or(0.0))
        .sum();
    Ok(Some(sum / thresholds.len() as f64))
}
