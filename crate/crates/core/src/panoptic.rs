//! Panoptic maps: a per-pixel segment-id raster plus its segment table.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BinaryMask;
use crate::taxonomy::{CategoryId, Kind, Role, Taxonomy};

pub type SegmentId = u32;

/// Raster id reserved for unlabeled pixels.
pub const VOID_ID: SegmentId = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub segment_id: SegmentId,
    pub category_id: CategoryId,
    pub area: u64,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("raster has {got} pixels, expected {width}x{height}")]
    RasterSize { width: u32, height: u32, got: usize },
    #[error("map must be at least 1x1")]
    EmptyGrid,
    #[error("segment id {0} appears in the raster but not in the segment table")]
    IdNotInTable(SegmentId),
    #[error("segment {0} is listed but has no pixels in the raster")]
    MissingFromRaster(SegmentId),
    #[error("segment id 0 is reserved for void")]
    ReservedId,
    #[error("duplicate segment id {0}")]
    DuplicateSegment(SegmentId),
    #[error("segment {id}: stored area {stored} but raster has {counted} pixels")]
    AreaMismatch { id: SegmentId, stored: u64, counted: u64 },
    #[error("segment {0}: score {1} outside [0, 1]")]
    ScoreOutOfRange(SegmentId, f64),
    #[error("segment {0} references unknown category {1}")]
    UnknownCategory(SegmentId, CategoryId),
    #[error("stuff category {0} has more than one segment")]
    DuplicateStuff(CategoryId),
    #[error("map dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanopticMap {
    width: u32,
    height: u32,
    ids: Vec<SegmentId>,
    segments: Vec<SegmentInfo>,
}

impl PanopticMap {
    /// Validates raster/table consistency. Segments are stored sorted by id.
    pub fn new(width: u32, height: u32, ids: Vec<SegmentId>, mut segments: Vec<SegmentInfo>) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::EmptyGrid);
        }
        if ids.len() != width as usize * height as usize {
            return Err(MapError::RasterSize {
                width,
                height,
                got: ids.len(),
            });
        }
        segments.sort_by_key(|s| s.segment_id);
        for w in segments.windows(2) {
            if w[0].segment_id == w[1].segment_id {
                return Err(MapError::DuplicateSegment(w[0].segment_id));
            }
        }
        let counts = count_ids(&ids);
        for s in &segments {
            if s.segment_id == VOID_ID {
                return Err(MapError::ReservedId);
            }
            if let Some(score) = s.score {
                if !(0.0..=1.0).contains(&score) {
                    return Err(MapError::ScoreOutOfRange(s.segment_id, score));
                }
            }
            let counted = counts.get(&s.segment_id).copied().unwrap_or(0);
            if counted == 0 {
                return Err(MapError::MissingFromRaster(s.segment_id));
            }
            if counted != s.area {
                return Err(MapError::AreaMismatch {
                    id: s.segment_id,
                    stored: s.area,
                    counted,
                });
            }
        }
        for &id in counts.keys() {
            if id != VOID_ID && segments.binary_search_by_key(&id, |s| s.segment_id).is_err() {
                return Err(MapError::IdNotInTable(id));
            }
        }
        Ok(Self {
            width,
            height,
            ids,
            segments,
        })
    }

    /// Builds a map from a raster and per-id metadata, computing areas.
    /// Metadata entries whose id does not occur in the raster are dropped.
    pub fn from_raster(
        width: u32,
        height: u32,
        ids: Vec<SegmentId>,
        meta: &BTreeMap<SegmentId, (CategoryId, Option<f64>)>,
    ) -> Result<Self, MapError> {
        let counts = count_ids(&ids);
        let mut segments = Vec::with_capacity(counts.len());
        for (&id, &area) in &counts {
            if id == VOID_ID {
                continue;
            }
            let &(category_id, score) = meta.get(&id).ok_or(MapError::IdNotInTable(id))?;
            segments.push(SegmentInfo {
                segment_id: id,
                category_id,
                area,
                score,
            });
        }
        Self::new(width, height, ids, segments)
    }

    pub fn void(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![VOID_ID; width as usize * height as usize], vec![]).expect("void map is valid")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn ids(&self) -> &[SegmentId] {
        &self.ids
    }

    pub fn segments(&self) -> &[SegmentInfo] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> Option<&SegmentInfo> {
        self.segments
            .binary_search_by_key(&id, |s| s.segment_id)
            .ok()
            .map(|i| &self.segments[i])
    }

    pub fn id_at(&self, x: u32, y: u32) -> SegmentId {
        self.ids[y as usize * self.width as usize + x as usize]
    }

    pub fn check_same_dims(&self, other: &Self) -> Result<(), MapError> {
        if self.dims() != other.dims() {
            return Err(MapError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Checks the taxonomy-dependent invariants: every category is known
    /// and each stuff category has at most one segment.
    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<(), MapError> {
        let mut stuff = BTreeSet::new();
        for s in &self.segments {
            let cat = taxonomy
                .get(s.category_id)
                .ok_or(MapError::UnknownCategory(s.segment_id, s.category_id))?;
            if cat.kind == Kind::Stuff && !stuff.insert(cat.id) {
                return Err(MapError::DuplicateStuff(cat.id));
            }
        }
        Ok(())
    }

    /// Dense lookup table from segment id to category id. Unknown ids map to
    /// `fallback`.
    pub(crate) fn category_lut(&self, fallback: CategoryId) -> Vec<CategoryId> {
        let max = self.segments.last().map_or(0, |s| s.segment_id) as usize;
        let mut lut = vec![fallback; max + 1];
        for s in &self.segments {
            lut[s.segment_id as usize] = s.category_id;
        }
        lut
    }

    /// One mask per listed segment, in segment-table order.
    pub fn segment_masks(&self) -> Vec<(BinaryMask, SegmentInfo)> {
        let max = self.segments.last().map_or(0, |s| s.segment_id) as usize;
        let mut slot = vec![usize::MAX; max + 1];
        for (i, s) in self.segments.iter().enumerate() {
            slot[s.segment_id as usize] = i;
        }
        let mut masks = vec![BinaryMask::new(self.width, self.height); self.segments.len()];
        for (p, &id) in self.ids.iter().enumerate() {
            if id != VOID_ID {
                masks[slot[id as usize]].insert_index(p);
            }
        }
        masks.into_iter().zip(self.segments.iter().cloned()).collect()
    }

    /// Pixels that are unlabeled or belong to a void-role category.
    pub fn void_mask(&self, taxonomy: &Taxonomy) -> BinaryMask {
        let void_cat = taxonomy.void_id();
        let lut = self.category_lut(void_cat);
        let mut m = BinaryMask::new(self.width, self.height);
        for (p, &id) in self.ids.iter().enumerate() {
            if id == VOID_ID || taxonomy.is_void(lut[id as usize]) {
                m.insert_index(p);
            }
        }
        m
    }
}

fn count_ids(ids: &[SegmentId]) -> BTreeMap<SegmentId, u64> {
    let mut counts = BTreeMap::new();
    for &id in ids {
        *counts.entry(id).or_insert(0u64) += 1;
    }
    counts
}

/// Per-pixel category raster; void pixels map to the taxonomy's void id.
pub fn to_semantic(map: &PanopticMap, taxonomy: &Taxonomy) -> Vec<CategoryId> {
    let void = taxonomy.void_id();
    let lut = map.category_lut(void);
    map.ids.iter().map(|&id| lut[id as usize]).collect()
}

/// Masks of every segment whose category has `role`, ascending by segment id.
pub fn extract_instances(
    map: &PanopticMap,
    taxonomy: &Taxonomy,
    role: Role,
) -> Result<Vec<(BinaryMask, SegmentInfo)>, MapError> {
    let mut keep = BTreeSet::new();
    for s in map.segments() {
        let cat = taxonomy
            .get(s.category_id)
            .ok_or(MapError::UnknownCategory(s.segment_id, s.category_id))?;
        if cat.role == role {
            keep.insert(s.segment_id);
        }
    }
    if keep.is_empty() {
        return Ok(Vec::new());
    }
    Ok(map
        .segment_masks()
        .into_iter()
        .filter(|(_, s)| keep.contains(&s.segment_id))
        .collect())
}
