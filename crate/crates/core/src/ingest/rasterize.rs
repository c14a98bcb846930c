use std::collections::{BTreeMap, BTreeSet};

use super::{AnnotationRecord, FormatError, Warning};
use crate::panoptic::{PanopticMap, SegmentId, VOID_ID};
use crate::taxonomy::{CategoryId, Kind, Taxonomy};

/// Paints annotation records into a panoptic map in file order.
///
/// Each record paints its hand mask when present, otherwise its filled box;
/// point prompts carry no area and are skipped. Thing records become one
/// segment each, numbered from 1 in record order; all records of a stuff
/// category share one segment. Later records overwrite earlier ones and
/// every overwritten pair is reported once.
pub fn rasterize_annotations(
    records: &[AnnotationRecord],
    width: u32,
    height: u32,
    taxonomy: &Taxonomy,
) -> Result<(PanopticMap, Vec<Warning>), FormatError> {
    let mut ids = vec![VOID_ID; width as usize * height as usize];
    let mut meta: BTreeMap<SegmentId, (CategoryId, Option<f64>)> = BTreeMap::new();
    let mut stuff_ids: BTreeMap<CategoryId, SegmentId> = BTreeMap::new();
    let mut overwritten = BTreeSet::new();
    let mut next_id: SegmentId = 1;

    for rec in records {
        let cat = taxonomy
            .get(rec.category_id())
            .ok_or_else(|| FormatError::MalformedExport(format!("unknown category {}", rec.category_id())))?;
        let mask = match &rec.hand_mask {
            Some(m) => {
                if m.dims() != (width, height) {
                    return Err(FormatError::Mask(crate::mask::MaskError::DimensionMismatch(
                        m.width(),
                        m.height(),
                        width,
                        height,
                    )));
                }
                m.clone()
            }
            None => match rec.prompt.box_mask(width, height) {
                Some(m) => m,
                None => continue,
            },
        };
        let seg = if cat.kind == Kind::Stuff {
            *stuff_ids.entry(cat.id).or_insert_with(|| {
                let id = next_id;
                next_id += 1;
                id
            })
        } else {
            let id = next_id;
            next_id += 1;
            id
        };
        meta.insert(seg, (cat.id, None));
        for p in mask.indices() {
            let prev = ids[p];
            if prev != VOID_ID && prev != seg {
                overwritten.insert((prev, seg));
            }
            ids[p] = seg;
        }
    }

    let mut warnings: Vec<Warning> = overwritten
        .into_iter()
        .map(|(earlier, later)| Warning::Overwrite { earlier, later })
        .collect();
    let map = PanopticMap::from_raster(width, height, ids, &meta)?;
    for &id in meta.keys() {
        if map.segment(id).is_none() {
            warnings.push(Warning::SegmentDropped { segment_id: id });
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((map, warnings))
}
