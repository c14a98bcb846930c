//! Panoptic mask processing, segmentation metrics and defect grading.
//!
//! The toolkit works on [`PanopticMap`]s: a per-pixel segment-id raster
//! plus a segment table. Around that type it provides
//!
//! * run-length codecs and pixel-set arithmetic ([`mask`], [`rle`]),
//! * annotation ingest and the PNG+JSON interchange format ([`ingest`]),
//! * instance postprocessing by connected components and dilation-based
//!   merging ([`postprocess`]),
//! * semantic, instance and panoptic metrics ([`metrics`]),
//! * defect counts, relative sizes and agreement analyses ([`grading`]),
//! * k-fold splitting and fold aggregation ([`crossval`]).

pub mod cli;
pub mod crossval;
pub mod grading;
pub mod ingest;
pub mod mask;
pub mod metrics;
pub mod panoptic;
pub mod par;
pub mod postprocess;
pub mod rle;
pub mod synthetic;
pub mod taxonomy;

pub use mask::{iou, BinaryMask, MaskError};
pub use panoptic::{extract_instances, to_semantic, MapError, PanopticMap, SegmentId, SegmentInfo};
pub use rle::{rle_decode, rle_encode, Rle};
pub use taxonomy::{Category, CategoryId, Kind, Role, Taxonomy};
