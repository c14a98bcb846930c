//! LabelStudio JSON export reader.
//!
//! Accepted shape: a JSON array (or a single object) of annotation-level
//! entries, each carrying a `result` list. Task-level entries with
//! `annotations[].result` are accepted too; only the first annotation of a
//! task is used. The image id is taken from `image_id` when present,
//! otherwise from the file stem of `data.image`.
//!
//! Supported result types are `rectanglelabels` (boxes) and
//! `keypointlabels` (points). Coordinates are percentages of the image size
//! and are converted with `round(p / 100 * side)`, rounding half away from
//! zero. A rectangle result may carry a `hand_mask` object in the RLE JSON
//! form used elsewhere in this crate.

use serde_json::Value;

use super::{AnnotationRecord, DatasetManifest, FormatError, Prompt, PromptShape};
use crate::rle::RleMask;
use crate::taxonomy::Taxonomy;

pub fn parse_labelstudio_export(
    bytes: &[u8],
    manifest: &DatasetManifest,
    taxonomy: &Taxonomy,
) -> Result<Vec<AnnotationRecord>, FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|e| FormatError::MalformedExport(format!("not UTF-8: {e}")))?;
    let root: Value = serde_json::from_str(text)?;
    let entries = match root {
        Value::Array(items) => items,
        obj @ Value::Object(_) => vec![obj],
        _ => return Err(malformed("top level must be an array or object")),
    };

    let mut records = Vec::new();
    for entry in &entries {
        let image_id = entry_image_id(entry)?;
        let image = manifest
            .entry(&image_id)
            .ok_or_else(|| FormatError::UnknownImage(image_id.clone()))?;
        let results = entry_results(entry, &image_id)?;
        for result in results {
            if let Some(rec) = parse_result(result, &image_id, image.width, image.height, taxonomy)? {
                records.push(rec);
            }
        }
    }
    Ok(records)
}

fn malformed(msg: impl Into<String>) -> FormatError {
    FormatError::MalformedExport(msg.into())
}

fn entry_image_id(entry: &Value) -> Result<String, FormatError> {
    if let Some(id) = entry.get("image_id").and_then(Value::as_str) {
        return Ok(id.to_string());
    }
    let path = entry
        .pointer("/data/image")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("entry has neither image_id nor data.image"))?;
    let name = path.rsplit(['/', '\\']).next().unwrap_or(path);
    let stem = match name.rfind('.') {
        Some(i) if i > 0 => &name[..i],
        _ => name,
    };
    Ok(stem.to_string())
}

fn entry_results<'a>(entry: &'a Value, image_id: &str) -> Result<&'a [Value], FormatError> {
    if let Some(r) = entry.get("result") {
        return r
            .as_array()
            .map(Vec::as_slice)
            .ok_or_else(|| malformed(format!("{image_id}: result is not a list")));
    }
    let annotations = entry
        .get("annotations")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed(format!("{image_id}: entry has no result list")))?;
    if annotations.len() > 1 {
        log::warn!(
            "{image_id}: {} annotations on one task, using the first",
            annotations.len()
        );
    }
    match annotations.first() {
        None => Ok(&[]),
        Some(a) => a
            .get("result")
            .and_then(Value::as_array)
            .map(Vec::as_slice)
            .ok_or_else(|| malformed(format!("{image_id}: annotation has no result list"))),
    }
}

fn percent(value: &Value, field: &'static str, ctx: &str) -> Result<f64, FormatError> {
    let v = value
        .get(field)
        .and_then(Value::as_f64)
        .ok_or_else(|| malformed(format!("{ctx}: missing numeric value.{field}")))?;
    if !(0.0..=100.0).contains(&v) {
        return Err(FormatError::PercentOutOfRange { field, value: v });
    }
    Ok(v)
}

fn to_px(p: f64, side: u32) -> u32 {
    (p / 100.0 * side as f64).round() as u32
}

fn label<'a>(value: &'a Value, key: &str, ctx: &str) -> Result<&'a str, FormatError> {
    value
        .get(key)
        .and_then(Value::as_array)
        .and_then(|l| l.first())
        .and_then(Value::as_str)
        .ok_or_else(|| malformed(format!("{ctx}: missing value.{key}[0]")))
}

fn parse_result(
    result: &Value,
    image_id: &str,
    width: u32,
    height: u32,
    taxonomy: &Taxonomy,
) -> Result<Option<AnnotationRecord>, FormatError> {
    let kind = result
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed(format!("{image_id}: result without type")))?;
    let value = result
        .get("value")
        .ok_or_else(|| malformed(format!("{image_id}: result without value")))?;
    let (label_key, shape) = match kind {
        "rectanglelabels" => {
            let x = percent(value, "x", image_id)?;
            let y = percent(value, "y", image_id)?;
            let w = percent(value, "width", image_id)?;
            let h = percent(value, "height", image_id)?;
            let (x_min, x_max) = span(to_px(x, width), to_px(w, width), width);
            let (y_min, y_max) = span(to_px(y, height), to_px(h, height), height);
            (
                "rectanglelabels",
                PromptShape::Box {
                    x_min,
                    y_min,
                    x_max,
                    y_max,
                },
            )
        }
        "keypointlabels" => {
            let x = percent(value, "x", image_id)?;
            let y = percent(value, "y", image_id)?;
            (
                "keypointlabels",
                PromptShape::Point {
                    x: to_px(x, width).min(width - 1),
                    y: to_px(y, height).min(height - 1),
                },
            )
        }
        other => {
            log::warn!("{image_id}: skipping unsupported result type {other:?}");
            return Ok(None);
        }
    };
    let name = label(value, label_key, image_id)?;
    let category = taxonomy
        .by_name(name)
        .ok_or_else(|| FormatError::UnknownCategoryName(name.to_string()))?;
    let prompt = Prompt {
        category_id: category.id,
        shape,
    };
    prompt
        .validate(width, height)
        .map_err(|detail| FormatError::InvalidPrompt {
            image_id: image_id.to_string(),
            detail,
        })?;

    let hand_mask = match result.get("hand_mask") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let rle: RleMask = serde_json::from_value(v.clone())?;
            if (rle.width, rle.height) != (width, height) {
                return Err(malformed(format!(
                    "{image_id}: hand mask is {}x{}, image is {width}x{height}",
                    rle.width, rle.height
                )));
            }
            Some(rle.to_mask()?)
        }
    };
    Ok(Some(AnnotationRecord {
        hand_mask,
        image_id: image_id.to_string(),
        prompt,
    }))
}

/// Start and exclusive end of a box side, clipped to `[0, side]` and at
/// least one pixel wide.
fn span(start: u32, extent: u32, side: u32) -> (u32, u32) {
    let start = start.min(side - 1);
    let end = (start + extent.max(1)).min(side);
    (start, end)
}
