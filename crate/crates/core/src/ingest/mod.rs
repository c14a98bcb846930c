//! Annotation ingest and the panoptic interchange format.

mod geometry;
mod labelstudio;
mod panoptic_io;
mod rasterize;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{BinaryMask, MaskError};
use crate::panoptic::{MapError, SegmentId};
use crate::rle::RleMask;
use crate::taxonomy::CategoryId;

pub use geometry::{resize_pad_map, resize_pad_mask, ResizeGeometry};
pub use labelstudio::parse_labelstudio_export;
pub use panoptic_io::{read_panoptic, write_panoptic, PanopticPair};
pub use rasterize::rasterize_annotations;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed export: {0}")]
    MalformedExport(String),
    #[error("unknown category name {0:?}")]
    UnknownCategoryName(String),
    #[error("{field} = {value} is outside [0, 100]")]
    PercentOutOfRange { field: &'static str, value: f64 },
    #[error("image {0:?} is not in the manifest")]
    UnknownImage(String),
    #[error("duplicate image id {0:?}")]
    DuplicateImage(String),
    #[error("image {0:?} has a zero dimension")]
    EmptyImage(String),
    #[error("invalid PNG: {0}")]
    BadPng(String),
    #[error("segment id {0} does not fit in 24 bits")]
    IdOverflow(SegmentId),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("PNG is {png_w}x{png_h} but sidecar says {json_w}x{json_h}")]
    SizeDisagreement {
        png_w: u32,
        png_h: u32,
        json_w: u32,
        json_h: u32,
    },
    #[error("invalid prompt for {image_id:?}: {detail}")]
    InvalidPrompt { image_id: String, detail: String },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// Non-fatal conditions raised while converting data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    /// A later annotation overwrote pixels of an earlier one.
    Overwrite { earlier: SegmentId, later: SegmentId },
    /// A segment lost all of its pixels and was removed.
    SegmentDropped { segment_id: SegmentId },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::Overwrite { earlier, later } => {
                write!(f, "segment {later} overwrites pixels of segment {earlier}")
            }
            Warning::SegmentDropped { segment_id } => {
                write!(f, "segment {segment_id} has no pixels left and was dropped")
            }
        }
    }
}

/// Box corners are `[x_min, x_max) x [y_min, y_max)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PromptShape {
    Box {
        x_max: u32,
        x_min: u32,
        y_max: u32,
        y_min: u32,
    },
    Point {
        x: u32,
        y: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub category_id: CategoryId,
    pub shape: PromptShape,
}

impl Prompt {
    pub fn validate(&self, width: u32, height: u32) -> Result<(), String> {
        match self.shape {
            PromptShape::Box {
                x_min,
                y_min,
                x_max,
                y_max,
            } => {
                if x_min >= x_max || y_min >= y_max {
                    return Err(format!("degenerate box ({x_min},{y_min})-({x_max},{y_max})"));
                }
                if x_max > width || y_max > height {
                    return Err(format!(
                        "box ({x_min},{y_min})-({x_max},{y_max}) exceeds {width}x{height}"
                    ));
                }
            }
            PromptShape::Point { x, y } => {
                if x >= width || y >= height {
                    return Err(format!("point ({x},{y}) outside {width}x{height}"));
                }
            }
        }
        Ok(())
    }

    /// Filled box mask; `None` for point prompts.
    pub fn box_mask(&self, width: u32, height: u32) -> Option<BinaryMask> {
        match self.shape {
            PromptShape::Box {
                x_min,
                y_min,
                x_max,
                y_max,
            } => Some(BinaryMask::from_fn(width, height, |x, y| {
                x >= x_min && x < x_max && y >= y_min && y < y_max
            })),
            PromptShape::Point { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    #[serde(default, with = "hand_mask_serde", skip_serializing_if = "Option::is_none")]
    pub hand_mask: Option<BinaryMask>,
    pub image_id: String,
    pub prompt: Prompt,
}

impl AnnotationRecord {
    pub fn category_id(&self) -> CategoryId {
        self.prompt.category_id
    }
}

mod hand_mask_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<BinaryMask>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(RleMask::from_mask).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BinaryMask>, D::Error> {
        Option::<RleMask>::deserialize(d)?
            .map(|r| r.to_mask().map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(default)]
    pub annotation_count: usize,
    pub height: u32,
    pub image_id: String,
    #[serde(default)]
    pub image_path: String,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Path of the taxonomy file the annotations refer to.
    #[serde(default)]
    pub taxonomy: String,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), FormatError> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.image_id.as_str()) {
                return Err(FormatError::DuplicateImage(e.image_id.clone()));
            }
            if e.width == 0 || e.height == 0 {
                return Err(FormatError::EmptyImage(e.image_id.clone()));
            }
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, FormatError> {
        let m: Self = serde_json::from_slice(bytes)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn entry(&self, image_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }

    pub fn image_ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.image_id.clone()).collect()
    }
}
