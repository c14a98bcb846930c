//! Resize-and-pad to a square canvas with nearest-neighbour sampling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Warning;
use crate::mask::BinaryMask;
use crate::panoptic::{PanopticMap, SegmentId, VOID_ID};

/// Where the resized content sits inside the `side` x `side` canvas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResizeGeometry {
    pub content_height: u32,
    pub content_width: u32,
    pub offset_x: u32,
    pub offset_y: u32,
    /// `side / max(source_width, source_height)`.
    pub scale: f64,
    pub side: u32,
    pub source_height: u32,
    pub source_width: u32,
}

impl ResizeGeometry {
    pub fn new(source_width: u32, source_height: u32, side: u32) -> Self {
        assert!(side >= 1, "target side must be positive");
        let long = source_width.max(source_height) as u64;
        let scaled = |s: u32| -> u32 {
            let v = (2 * s as u64 * side as u64 + long) / (2 * long);
            v.clamp(1, side as u64) as u32
        };
        let content_width = scaled(source_width);
        let content_height = scaled(source_height);
        Self {
            content_height,
            content_width,
            offset_x: (side - content_width) / 2,
            offset_y: (side - content_height) / 2,
            scale: side as f64 / long as f64,
            side,
            source_height,
            source_width,
        }
    }

    /// Maps a canvas pixel back to its source pixel; `None` on padding.
    pub fn source_of(&self, x: u32, y: u32) -> Option<(u32, u32)> {
        let cx = x.checked_sub(self.offset_x).filter(|&v| v < self.content_width)?;
        let cy = y.checked_sub(self.offset_y).filter(|&v| v < self.content_height)?;
        Some((
            nearest(cx, self.content_width, self.source_width),
            nearest(cy, self.content_height, self.source_height),
        ))
    }

    fn resample<T: Copy>(&self, src: &[T], pad: T) -> Vec<T> {
        let side = self.side as usize;
        let sx: Vec<u32> = (0..self.content_width)
            .map(|x| nearest(x, self.content_width, self.source_width))
            .collect();
        let mut out = vec![pad; side * side];
        for cy in 0..self.content_height {
            let row = nearest(cy, self.content_height, self.source_height) as usize * self.source_width as usize;
            let base = (cy + self.offset_y) as usize * side + self.offset_x as usize;
            for (cx, &s) in sx.iter().enumerate() {
                out[base + cx] = src[row + s as usize];
            }
        }
        out
    }
}

/// Source index sampled by destination index `d` when `src_len` pixels are
/// scaled to `dst_len`: the source pixel containing the destination centre.
fn nearest(d: u32, dst_len: u32, src_len: u32) -> u32 {
    let v = (2 * d as u64 + 1) * src_len as u64 / (2 * dst_len as u64);
    v.min(src_len as u64 - 1) as u32
}

/// Resizes a panoptic map so its longest side equals `side`, centred on a
/// void-padded square canvas. Segments that vanish are dropped with a warning.
pub fn resize_pad_map(map: &PanopticMap, side: u32) -> (PanopticMap, ResizeGeometry, Vec<Warning>) {
    let geom = ResizeGeometry::new(map.width(), map.height(), side);
    let ids = geom.resample(map.ids(), VOID_ID);
    let meta: BTreeMap<SegmentId, _> = map
        .segments()
        .iter()
        .map(|s| (s.segment_id, (s.category_id, s.score)))
        .collect();
    let out = PanopticMap::from_raster(side, side, ids, &meta).expect("resampling only copies existing ids");
    let mut warnings = Vec::new();
    for s in map.segments() {
        if out.segment(s.segment_id).is_none() {
            log::warn!("segment {} vanished when resizing to {side}", s.segment_id);
            warnings.push(Warning::SegmentDropped {
                segment_id: s.segment_id,
            });
        }
    }
    (out, geom, warnings)
}

pub fn resize_pad_mask(mask: &BinaryMask, side: u32) -> (BinaryMask, ResizeGeometry) {
    let geom = ResizeGeometry::new(mask.width(), mask.height(), side);
    let src: Vec<bool> = (0..mask.len()).map(|i| mask.contains_index(i)).collect();
    let dst = geom.resample(&src, false);
    let out = BinaryMask::from_indices(side, side, dst.iter().enumerate().filter(|(_, &v)| v).map(|(i, _)| i))
        .expect("indices are inside the canvas");
    (out, geom)
}
