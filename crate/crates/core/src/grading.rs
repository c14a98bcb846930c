//! Defect counts, relative defect sizes, and agreement between two mask
//! sources (annotated vs predicted or generated).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{iou, BinaryMask, MaskError};
use crate::metrics::match_greedy_by_iou;
use crate::panoptic::{extract_instances, MapError, PanopticMap, SegmentId};
use crate::taxonomy::{CategoryId, Role, Taxonomy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradeError {
    #[error("no foreground fruit: relative size denominator is zero")]
    NoForegroundFruit,
    #[error("no input pairs")]
    EmptyInput,
    #[error("no matched defect pairs")]
    NoMatches,
    #[error("sizes have zero variance on the {0} axis")]
    ZeroVariance(&'static str),
    #[error("annotated mask area {0} is below the first bin edge {1}")]
    BelowFirstBin(u64, u64),
    #[error("bin edges must be positive and strictly increasing")]
    BadBins,
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// What a defect's pixel count is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeDenominator {
    /// Foreground-fruit pixels plus all defect pixels.
    #[default]
    FruitAndDefects,
    /// Foreground-fruit pixels only.
    FruitOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectSize {
    pub area_px: u64,
    pub category_id: CategoryId,
    pub relative_size: f64,
    pub segment_id: SegmentId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeRecord {
    /// Per defect category, including zero counts.
    pub defect_count: BTreeMap<CategoryId, usize>,
    pub defects: Vec<DefectSize>,
    pub denominator_px: u64,
    pub image_id: String,
    pub total_count: usize,
}

pub fn grade(
    map: &PanopticMap,
    taxonomy: &Taxonomy,
    image_id: &str,
    denominator: SizeDenominator,
) -> Result<GradeRecord, GradeError> {
    let fg = taxonomy
        .role_id(Role::FruitForeground)
        .ok_or(GradeError::NoForegroundFruit)?;
    let fg_area: u64 = map
        .segments()
        .iter()
        .filter(|s| s.category_id == fg)
        .map(|s| s.area)
        .sum();
    let mut defect_count: BTreeMap<CategoryId, usize> = taxonomy.with_role(Role::Defect).map(|c| (c.id, 0)).collect();
    let defects: Vec<_> = map
        .segments()
        .iter()
        .filter(|s| defect_count.contains_key(&s.category_id))
        .collect();
    let defect_area: u64 = defects.iter().map(|s| s.area).sum();
    let denom = match denominator {
        SizeDenominator::FruitAndDefects => fg_area + defect_area,
        SizeDenominator::FruitOnly => fg_area,
    };
    if denom == 0 {
        return Err(GradeError::NoForegroundFruit);
    }
    let sizes = defects
        .iter()
        .map(|s| {
            *defect_count.get_mut(&s.category_id).expect("defect category") += 1;
            DefectSize {
                area_px: s.area,
                category_id: s.category_id,
                relative_size: s.area as f64 / denom as f64,
                segment_id: s.segment_id,
            }
        })
        .collect::<Vec<_>>();
    Ok(GradeRecord {
        defect_count,
        total_count: sizes.len(),
        defects: sizes,
        denominator_px: denom,
        image_id: image_id.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountCell {
    pub annotated: usize,
    pub n: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountAgreement {
    pub exact_rate: f64,
    /// Non-empty cells ascending by (annotated, predicted).
    pub matrix: Vec<CountCell>,
    pub n: usize,
    pub within_one_rate: f64,
}

/// Compares `(annotated, predicted)` defect counts.
pub fn count_agreement_from_counts(counts: &[(usize, usize)]) -> Result<CountAgreement, GradeError> {
    if counts.is_empty() {
        return Err(GradeError::EmptyInput);
    }
    let mut cells: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let (mut exact, mut near) = (0usize, 0usize);
    for &(a, p) in counts {
        *cells.entry((a, p)).or_insert(0) += 1;
        exact += (a == p) as usize;
        near += (a.abs_diff(p) <= 1) as usize;
    }
    let n = counts.len();
    Ok(CountAgreement {
        exact_rate: exact as f64 / n as f64,
        matrix: cells
            .into_iter()
            .map(|((annotated, predicted), n)| CountCell {
                annotated,
                n,
                predicted,
            })
            .collect(),
        n,
        within_one_rate: near as f64 / n as f64,
    })
}

/// Count agreement over `(annotated map, predicted map)` pairs. With
/// `per_category` each (image, defect category) contributes one entry;
/// otherwise each image contributes its total defect count.
pub fn count_agreement(
    pairs: &[(&PanopticMap, &PanopticMap)],
    taxonomy: &Taxonomy,
    per_category: bool,
) -> Result<CountAgreement, GradeError> {
    let defect_ids: Vec<CategoryId> = taxonomy.with_role(Role::Defect).map(|c| c.id).collect();
    let count = |m: &PanopticMap, c: Option<CategoryId>| {
        m.segments()
            .iter()
            .filter(|s| match c {
                Some(c) => s.category_id == c,
                None => defect_ids.contains(&s.category_id),
            })
            .count()
    };
    let mut counts = Vec::new();
    for (gt, pred) in pairs {
        if per_category {
            for &c in &defect_ids {
                counts.push((count(gt, Some(c)), count(pred, Some(c))));
            }
        } else {
            counts.push((count(gt, None), count(pred, None)));
        }
    }
    count_agreement_from_counts(&counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeAgreement {
    pub intercept: f64,
    pub n: usize,
    /// `(annotated, predicted)` relative sizes.
    pub pairs: Vec<(f64, f64)>,
    pub pearson_r: f64,
    /// Least-squares slope of predicted on annotated.
    pub slope: f64,
}

impl SizeAgreement {
    pub fn from_pairs(pairs: Vec<(f64, f64)>) -> Result<Self, GradeError> {
        if pairs.is_empty() {
            return Err(GradeError::NoMatches);
        }
        let n = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for &(x, y) in &pairs {
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
            sxy += (x - mx) * (y - my);
        }
        if sxx == 0.0 {
            return Err(GradeError::ZeroVariance("annotated"));
        }
        if syy == 0.0 {
            return Err(GradeError::ZeroVariance("predicted"));
        }
        let slope = sxy / sxx;
        Ok(Self {
            intercept: my - slope * mx,
            n: pairs.len(),
            pairs,
            pearson_r: (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0),
            slope,
        })
    }
}

/// Matches defect instances of the same category per image (greedy by IoU,
/// at least `min_iou`) and correlates their relative sizes. Unmatched
/// instances are left out.
pub fn size_agreement(
    pairs: &[(&PanopticMap, &PanopticMap)],
    taxonomy: &Taxonomy,
    min_iou: f64,
    denominator: SizeDenominator,
) -> Result<SizeAgreement, GradeError> {
    if pairs.is_empty() {
        return Err(GradeError::EmptyInput);
    }
    let mut sizes = Vec::new();
    for (gt, pred) in pairs {
        let g_grade = grade(gt, taxonomy, "", denominator)?;
        let p_grade = grade(pred, taxonomy, "", denominator)?;
        let rel = |grade: &GradeRecord, id: SegmentId| {
            grade
                .defects
                .iter()
                .find(|d| d.segment_id == id)
                .map(|d| d.relative_size)
                .expect("graded defect")
        };
        let g_inst = extract_instances(gt, taxonomy, Role::Defect)?;
        let p_inst = extract_instances(pred, taxonomy, Role::Defect)?;
        for cat in taxonomy.with_role(Role::Defect) {
            let gs: Vec<_> = g_inst.iter().filter(|i| i.1.category_id == cat.id).cloned().collect();
            let ps: Vec<_> = p_inst.iter().filter(|i| i.1.category_id == cat.id).cloned().collect();
            if gs.is_empty() || ps.is_empty() {
                continue;
            }
            let m = match_greedy_by_iou(&ps, &gs, min_iou)?;
            for (pi, gi, _) in m.pairs {
                sizes.push((rel(&g_grade, gs[gi].1.segment_id), rel(&p_grade, ps[pi].1.segment_id)));
            }
        }
    }
    SizeAgreement::from_pairs(sizes)
}

pub const DEFAULT_BIN_EDGES: [u64; 5] = [1, 10, 100, 1_000, 10_000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeBin {
    pub lower: u64,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub n: usize,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    /// Exclusive; `None` for the open last bin.
    pub upper: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairIou {
    pub annotated_area: u64,
    pub bin: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskAgreement {
    pub bins: Vec<SizeBin>,
    pub ious: Vec<PairIou>,
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// IoU between annotated and generated masks, binned by annotated area.
/// Bin `i` covers `[edges[i], edges[i + 1])`; the last bin is open.
pub fn mask_agreement_by_size(pairs: &[(BinaryMask, BinaryMask)], edges: &[u64]) -> Result<MaskAgreement, GradeError> {
    if pairs.is_empty() {
        return Err(GradeError::EmptyInput);
    }
    if edges.is_empty() || edges[0] == 0 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GradeError::BadBins);
    }
    let mut ious = Vec::with_capacity(pairs.len());
    for (a, g) in pairs {
        let area = a.area();
        if area < edges[0] {
            return Err(GradeError::BelowFirstBin(area, edges[0]));
        }
        let bin = edges.partition_point(|&e| e <= area) - 1;
        ious.push(PairIou {
            annotated_area: area,
            bin,
            iou: iou(a, g)?,
        });
    }
    let bins = (0..edges.len())
        .map(|b| {
            let mut v: Vec<f64> = ious.iter().filter(|p| p.bin == b).map(|p| p.iou).collect();
            v.sort_by(|x, y| x.partial_cmp(y).expect("finite IoU"));
            let stat = |f: &dyn Fn(&[f64]) -> f64| (!v.is_empty()).then(|| f(&v));
            SizeBin {
                lower: edges[b],
                mean: stat(&|v| v.iter().sum::<f64>() / v.len() as f64),
                median: stat(&|v| quantile(v, 0.5)),
                n: v.len(),
                q1: stat(&|v| quantile(v, 0.25)),
                q3: stat(&|v| quantile(v, 0.75)),
                upper: edges.get(b + 1).copied(),
            }
        })
        .collect();
    Ok(MaskAgreement { bins, ious })
}

/// Pairs every annotated defect segment with the generated segment of the
/// same id; a missing generated segment pairs with an empty mask.
pub fn pair_masks_by_segment(
    annotated: &PanopticMap,
    generated: &PanopticMap,
    taxonomy: &Taxonomy,
) -> Result<Vec<(BinaryMask, BinaryMask)>, GradeError> {
    annotated.check_same_dims(generated)?;
    let gen: BTreeMap<SegmentId, BinaryMask> = generated
        .segment_masks()
        .into_iter()
        .map(|(m, s)| (s.segment_id, m))
        .collect();
    let empty = BinaryMask::new(annotated.width(), annotated.height());
    Ok(extract_instances(annotated, taxonomy, Role::Defect)?
        .into_iter()
        .map(|(m, s)| {
            let g = gen.get(&s.segment_id).cloned().unwrap_or_else(|| empty.clone());
            (m, g)
        })
        .collect())
}

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// One row per image: id, total, per-category counts, summed relative size.
pub fn grades_to_csv(records: &[GradeRecord], taxonomy: &Taxonomy) -> String {
    let defects: Vec<_> = taxonomy.with_role(Role::Defect).collect();
    let mut header = vec!["image_id".to_string(), "total_count".to_string()];
    header.extend(defects.iter().map(|c| format!("count:{}", c.name)));
    header.push("relative_size_sum".into());
    let mut rows = vec![header];
    for r in records {
        let mut row = vec![r.image_id.clone(), r.total_count.to_string()];
        row.extend(
            defects
                .iter()
                .map(|c| r.defect_count.get(&c.id).copied().unwrap_or(0).to_string()),
        );
        row.push(r.defects.iter().map(|d| d.relative_size).sum::<f64>().to_string());
        rows.push(row);
    }
    csv_string(rows)
}

impl CountAgreement {
    pub fn to_csv(&self) -> String {
        let mut rows = vec![vec!["annotated".into(), "predicted".into(), "n".into()]];
        rows.extend(
            self.matrix
                .iter()
                .map(|c| vec![c.annotated.to_string(), c.predicted.to_string(), c.n.to_string()]),
        );
        csv_string(rows)
    }
}

impl SizeAgreement {
    pub fn to_csv(&self) -> String {
        let mut rows = vec![vec!["annotated".into(), "predicted".into()]];
        rows.extend(self.pairs.iter().map(|(a, p)| vec![a.to_string(), p.to_string()]));
        csv_string(rows)
    }
}

impl MaskAgreement {
    pub fn to_csv(&self) -> String {
        let mut rows = vec![vec!["annotated_area".into(), "bin".into(), "iou".into()]];
        rows.extend(
            self.ious
                .iter()
                .map(|p| vec![p.annotated_area.to_string(), p.bin.to_string(), p.iou.to_string()]),
        );
        csv_string(rows)
    }
}
