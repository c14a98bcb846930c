use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::detection::{interpolated_ap, match_image, recall_at, sort_detections, Detection};
use super::panoptic::{pq_stats, PanopticQuality, PqStats};
use super::semantic::SemanticCounts;
use super::{MetricConfig, MetricsError};
use crate::panoptic::{PanopticMap, SegmentId, SegmentInfo, VOID_ID};
use crate::par::{self, Execution};
use crate::taxonomy::{CategoryId, Kind, Role, Taxonomy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ar: Option<f64>,
    pub category_id: CategoryId,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub iou: Option<f64>,
    pub kind: Kind,
    pub name: String,
    pub pq: Option<f64>,
    pub rq: Option<f64>,
    pub sq: Option<f64>,
    pub tp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    /// Mean over thing categories with GT instances.
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ar: Option<f64>,
    pub iou_bg: Option<f64>,
    /// Mean IoU over defect categories.
    pub iou_defects: Option<f64>,
    pub iou_fg: Option<f64>,
    pub miou: Option<f64>,
    pub pq: Option<f64>,
    pub rq: Option<f64>,
    pub sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Categories present in GT or prediction, ascending by id.
    pub categories: Vec<CategoryMetrics>,
    pub image_count: usize,
    pub overall: OverallMetrics,
    pub thresholds: Vec<f64>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    pub fn category(&self, id: CategoryId) -> Option<&CategoryMetrics> {
        self.categories.iter().find(|c| c.category_id == id)
    }

    /// Human-readable table, three decimals, `-` for undefined values.
    pub fn to_markdown(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        let mut s = String::new();
        let _ = writeln!(s, "Images: {}\n", self.image_count);
        s.push_str("| Category | Kind | IoU | AP | AP@50 | AP@75 | AR | PQ | SQ | RQ | TP | FP | FN |\n");
        s.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|---|\n");
        for c in &self.categories {
            let kind = match c.kind {
                Kind::Thing => "thing",
                Kind::Stuff => "stuff",
            };
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                c.name,
                kind,
                f(c.iou),
                f(c.ap),
                f(c.ap50),
                f(c.ap75),
                f(c.ar),
                f(c.pq),
                f(c.sq),
                f(c.rq),
                c.tp,
                c.fp,
                c.fn_
            );
        }
        let o = &self.overall;
        let _ = writeln!(
            s,
            "\nmIoU {} | PQ {} | SQ {} | RQ {} | AP {} | AP@50 {} | AP@75 {} | AR {}",
            f(o.miou),
            f(o.pq),
            f(o.sq),
            f(o.rq),
            f(o.ap),
            f(o.ap50),
            f(o.ap75),
            f(o.ar)
        );
        s
    }
}

/// Mergeable per-image partial sums. Merge in ascending image order, then
/// [`ImageEvaluation::finish`] once.
#[derive(Debug, Clone, Default)]
pub struct ImageEvaluation {
    semantic: SemanticCounts,
    pq: BTreeMap<CategoryId, PqStats>,
    detections: BTreeMap<CategoryId, Vec<Detection>>,
    gt_counts: BTreeMap<CategoryId, usize>,
    present: BTreeSet<CategoryId>,
    images: usize,
}

/// Config thresholds plus 0.5 and 0.75, ascending and deduplicated.
fn eval_thresholds(config: &MetricConfig) -> Vec<f64> {
    let mut t = config.ap_thresholds.clone();
    t.extend([0.5, 0.75]);
    t.sort_by(|a, b| a.partial_cmp(b).expect("finite thresholds"));
    t.dedup();
    t
}

fn threshold_index(all: &[f64], t: f64) -> usize {
    all.iter().position(|&x| x == t).expect("threshold evaluated")
}

impl ImageEvaluation {
    pub fn compute(
        pred: &PanopticMap,
        gt: &PanopticMap,
        taxonomy: &Taxonomy,
        config: &MetricConfig,
        image_rank: usize,
    ) -> Result<Self, MetricsError> {
        pred.check_same_dims(gt)?;
        pred.validate(taxonomy)?;
        gt.validate(taxonomy)?;
        let thresholds = eval_thresholds(config);

        let semantic = SemanticCounts::compute(pred, gt, taxonomy);
        let pq = pq_stats(pred, gt, taxonomy, config.pq_match_threshold);

        let scored = |c: CategoryId| taxonomy.get(c).is_some_and(|c| c.role != Role::Void);
        let present: BTreeSet<CategoryId> = pred
            .segments()
            .iter()
            .chain(gt.segments())
            .map(|s| s.category_id)
            .filter(|&c| scored(c))
            .collect();

        let mut inter: HashMap<(SegmentId, SegmentId), u64> = HashMap::new();
        for (&p, &g) in pred.ids().iter().zip(gt.ids()) {
            if p != VOID_ID && g != VOID_ID {
                *inter.entry((p, g)).or_insert(0) += 1;
            }
        }

        let mut detections = BTreeMap::new();
        let mut gt_counts = BTreeMap::new();
        for &c in &present {
            if taxonomy.get(c).map(|c| c.kind) != Some(Kind::Thing) {
                continue;
            }
            let preds: Vec<SegmentInfo> = pred.segments().iter().filter(|s| s.category_id == c).cloned().collect();
            let gts: Vec<&SegmentInfo> = gt.segments().iter().filter(|s| s.category_id == c).collect();
            let ious: Vec<Vec<f64>> = preds
                .iter()
                .map(|p| {
                    gts.iter()
                        .map(|g| {
                            let n = inter.get(&(p.segment_id, g.segment_id)).copied().unwrap_or(0);
                            n as f64 / (p.area + g.area - n) as f64
                        })
                        .collect()
                })
                .collect();
            detections.insert(c, match_image(&preds, &ious, gts.len(), &thresholds, image_rank));
            gt_counts.insert(c, gts.len());
        }

        Ok(Self {
            semantic,
            pq,
            detections,
            gt_counts,
            present,
            images: 1,
        })
    }

    pub fn merge(&mut self, other: &Self) {
        self.semantic.merge(&other.semantic);
        for (&c, s) in &other.pq {
            self.pq.entry(c).or_default().merge(s);
        }
        for (&c, d) in &other.detections {
            self.detections.entry(c).or_default().extend(d.iter().cloned());
        }
        for (&c, &n) in &other.gt_counts {
            *self.gt_counts.entry(c).or_insert(0) += n;
        }
        self.present.extend(other.present.iter().copied());
        self.images += other.images;
    }

    pub fn finish(mut self, taxonomy: &Taxonomy, config: &MetricConfig) -> EvaluationReport {
        let thresholds = eval_thresholds(config);
        let t50 = threshold_index(&thresholds, 0.5);
        let t75 = threshold_index(&thresholds, 0.75);
        let ap_idx: Vec<usize> = config
            .ap_thresholds
            .iter()
            .map(|&t| threshold_index(&thresholds, t))
            .collect();
        let points = config.recall_curve_points;
        let mean = |vals: &[Option<f64>]| -> Option<f64> {
            let v: Vec<f64> = vals.iter().flatten().copied().collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };

        let mut categories = Vec::new();
        for &c in &self.present {
            let cat = taxonomy.get(c).expect("validated category");
            let stats = self.pq.get(&c).copied().unwrap_or_default();
            let (mut ap, mut ap50, mut ap75, mut ar) = (None, None, None, None);
            if let Some(dets) = self.detections.get_mut(&c) {
                sort_detections(dets);
                let g = self.gt_counts.get(&c).copied().unwrap_or(0);
                let aps: Vec<Option<f64>> = ap_idx.iter().map(|&i| interpolated_ap(dets, i, g, points)).collect();
                ap = mean(&aps);
                ap50 = interpolated_ap(dets, t50, g, points);
                ap75 = interpolated_ap(dets, t75, g, points);
                let recalls: Vec<Option<f64>> = ap_idx.iter().map(|&i| recall_at(dets, i, g)).collect();
                ar = mean(&recalls);
            }
            categories.push(CategoryMetrics {
                ap,
                ap50,
                ap75,
                ar,
                category_id: c,
                fn_: stats.fn_,
                fp: stats.fp,
                iou: self.semantic.iou(c),
                kind: cat.kind,
                name: cat.name.clone(),
                pq: stats.pq(),
                rq: stats.rq(),
                sq: stats.sq(),
                tp: stats.tp,
            });
        }

        let pq = PanopticQuality::from_stats(self.pq.clone());
        let things: Vec<&CategoryMetrics> = categories.iter().filter(|c| c.kind == Kind::Thing).collect();
        let role_iou = |role: Role| {
            let ious: Vec<Option<f64>> = taxonomy.with_role(role).map(|c| self.semantic.iou(c.id)).collect();
            mean(&ious)
        };
        let overall = OverallMetrics {
            ap: mean(&things.iter().map(|c| c.ap).collect::<Vec<_>>()),
            ap50: mean(&things.iter().map(|c| c.ap50).collect::<Vec<_>>()),
            ap75: mean(&things.iter().map(|c| c.ap75).collect::<Vec<_>>()),
            ar: mean(&things.iter().map(|c| c.ar).collect::<Vec<_>>()),
            iou_bg: role_iou(Role::FruitBackground),
            iou_defects: role_iou(Role::Defect),
            iou_fg: role_iou(Role::FruitForeground),
            miou: self.semantic.finish().miou,
            pq: pq.pq,
            rq: pq.rq,
            sq: pq.sq,
        };
        EvaluationReport {
            categories,
            image_count: self.images,
            overall,
            thresholds: config.ap_thresholds.clone(),
        }
    }
}

pub fn evaluate_image(
    pred: &PanopticMap,
    gt: &PanopticMap,
    taxonomy: &Taxonomy,
    config: &MetricConfig,
) -> Result<EvaluationReport, MetricsError> {
    config.validate()?;
    Ok(ImageEvaluation::compute(pred, gt, taxonomy, config, 0)?.finish(taxonomy, config))
}

/// Evaluates `(image_id, pred, gt)` triples as one dataset. Detections are
/// pooled across images before the precision-recall curves are built. The
/// result does not depend on input order: images are accumulated in
/// ascending `image_id` order.
pub fn evaluate_dataset(
    pairs: &[(String, PanopticMap, PanopticMap)],
    taxonomy: &Taxonomy,
    config: &MetricConfig,
    exec: Execution,
) -> Result<EvaluationReport, MetricsError> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].0.cmp(&pairs[b].0));
    let ranked: Vec<(usize, usize)> = order.into_iter().enumerate().collect();
    let partials = par::map(exec, &ranked, |&(rank, i)| {
        let (_, pred, gt) = &pairs[i];
        ImageEvaluation::compute(pred, gt, taxonomy, config, rank)
    });
    let mut total = ImageEvaluation::default();
    for p in partials {
        total.merge(&p?);
    }
    Ok(total.finish(taxonomy, config))
}
