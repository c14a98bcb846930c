//! PNG + JSON panoptic pairs.
//!
//! The PNG is 8-bit RGB with `id = R + 256 G + 65536 B` per pixel (0 = void).
//! The sidecar JSON is
//! `{"height", "image_id", "segments": [{"area", "category_id", "id", "score"?}], "width"}`
//! with keys in sorted order and segments ascending by id.

use std::io::Cursor;

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::panoptic::{PanopticMap, SegmentInfo};
use crate::taxonomy::Taxonomy;

const MAX_ID: u32 = (1 << 24) - 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PanopticPair {
    pub image_id: String,
    pub map: PanopticMap,
}

#[derive(Serialize, Deserialize)]
struct SidecarSegment {
    area: u64,
    category_id: u32,
    id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    height: u32,
    image_id: String,
    segments: Vec<SidecarSegment>,
    width: u32,
}

pub fn write_panoptic(map: &PanopticMap, image_id: &str) -> Result<(Vec<u8>, Vec<u8>), FormatError> {
    if let Some(s) = map.segments().iter().find(|s| s.segment_id > MAX_ID) {
        return Err(FormatError::IdOverflow(s.segment_id));
    }
    let mut rgb = Vec::with_capacity(map.ids().len() * 3);
    for &id in map.ids() {
        rgb.extend_from_slice(&[(id & 0xff) as u8, (id >> 8 & 0xff) as u8, (id >> 16 & 0xff) as u8]);
    }
    let mut png_bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut png_bytes, map.width(), map.height());
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Balanced);
        enc.set_filter(png::Filter::Sub);
        let mut writer = enc.write_header().map_err(|e| FormatError::BadPng(e.to_string()))?;
        writer
            .write_image_data(&rgb)
            .map_err(|e| FormatError::BadPng(e.to_string()))?;
        writer.finish().map_err(|e| FormatError::BadPng(e.to_string()))?;
    }

    let sidecar = Sidecar {
        height: map.height(),
        image_id: image_id.to_string(),
        segments: map
            .segments()
            .iter()
            .map(|s| SidecarSegment {
                area: s.area,
                category_id: s.category_id,
                id: s.segment_id,
                score: s.score,
            })
            .collect(),
        width: map.width(),
    };
    let mut json = serde_json::to_vec_pretty(&sidecar)?;
    json.push(b'\n');
    Ok((png_bytes, json))
}

pub fn read_panoptic(png_bytes: &[u8], json_bytes: &[u8], taxonomy: &Taxonomy) -> Result<PanopticPair, FormatError> {
    let bad = |e: png::DecodingError| FormatError::BadPng(e.to_string());
    let mut decoder = png::Decoder::new(Cursor::new(png_bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(bad)?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Rgb || depth != png::BitDepth::Eight {
        return Err(FormatError::BadPng(format!(
            "expected 8-bit RGB, got {color:?} {depth:?}"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| FormatError::BadPng("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(bad)?;
    let (w, h) = (info.width, info.height);
    let line = info.line_size;

    let sidecar: Sidecar = serde_json::from_slice(json_bytes)?;
    if (sidecar.width, sidecar.height) != (w, h) {
        return Err(FormatError::SizeDisagreement {
            png_w: w,
            png_h: h,
            json_w: sidecar.width,
            json_h: sidecar.height,
        });
    }

    let mut ids = Vec::with_capacity(w as usize * h as usize);
    for row in buf.chunks_exact(line).take(h as usize) {
        for px in row[..w as usize * 3].chunks_exact(3) {
            ids.push(px[0] as u32 | (px[1] as u32) << 8 | (px[2] as u32) << 16);
        }
    }
    let segments = sidecar
        .segments
        .into_iter()
        .map(|s| SegmentInfo {
            segment_id: s.id,
            category_id: s.category_id,
            area: s.area,
            score: s.score,
        })
        .collect();
    let map = PanopticMap::new(w, h, ids, segments)?;
    map.validate(taxonomy)?;
    Ok(PanopticPair {
        image_id: sidecar.image_id,
        map,
    })
}
