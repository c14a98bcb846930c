//! Seeded synthetic fruit scenes: a LabelStudio-style export with hand
//! masks, the ground truth it rasterizes to, and perturbed predictions.
//!
//! Predictions differ from the truth by one-pixel shifts, missed defects,
//! spurious blobs, and defects split in two by a one-pixel cut (which
//! postprocessing with `d >= 1` joins again).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::ingest::{rasterize_annotations, AnnotationRecord, DatasetManifest, ManifestEntry, Prompt, PromptShape};
use crate::mask::BinaryMask;
use crate::panoptic::{PanopticMap, SegmentId, VOID_ID};
use crate::rle::RleMask;
use crate::taxonomy::{CategoryId, Role, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub images: u32,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            images: 12,
            width: 160,
            height: 120,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub taxonomy: Taxonomy,
    pub manifest: DatasetManifest,
    pub records: Vec<AnnotationRecord>,
    /// `(image_id, map)` ascending by id.
    pub ground_truth: Vec<(String, PanopticMap)>,
    pub predictions: Vec<(String, PanopticMap)>,
}

fn ellipse(w: u32, h: u32, cx: f64, cy: f64, rx: f64, ry: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| {
        let dx = (x as f64 - cx) / rx;
        let dy = (y as f64 - cy) / ry;
        dx * dx + dy * dy <= 1.0
    })
}

fn minus(a: &BinaryMask, b: &BinaryMask) -> BinaryMask {
    BinaryMask::from_fn(a.width(), a.height(), |x, y| a.contains(x, y) && !b.contains(x, y))
}

fn shifted(m: &BinaryMask, dx: i32, dy: i32) -> BinaryMask {
    let (w, h) = m.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        let (sx, sy) = (x as i64 - dx as i64, y as i64 - dy as i64);
        sx >= 0 && sy >= 0 && sx < w as i64 && sy < h as i64 && m.contains(sx as u32, sy as u32)
    })
}

fn record(image_id: &str, category_id: CategoryId, mask: BinaryMask) -> AnnotationRecord {
    let (x0, y0, x1, y1) = mask.bbox().expect("non-empty hand mask");
    AnnotationRecord {
        hand_mask: Some(mask),
        image_id: image_id.to_string(),
        prompt: Prompt {
            category_id,
            shape: PromptShape::Box {
                x_min: x0,
                y_min: y0,
                x_max: x1 + 1,
                y_max: y1 + 1,
            },
        },
    }
}

struct Scene {
    records: Vec<AnnotationRecord>,
    fruit: BinaryMask,
    defects: Vec<(CategoryId, BinaryMask)>,
}

fn scene(rng: &mut ChaCha8Rng, image_id: &str, w: u32, h: u32, taxonomy: &Taxonomy) -> Scene {
    let (wf, hf) = (w as f64, h as f64);
    let border = BinaryMask::from_fn(w, h, |x, y| x == 0 || y == 0 || x == w - 1 || y == h - 1);
    let fg = ellipse(
        w,
        h,
        wf * rng.random_range(0.4..0.6),
        hf * rng.random_range(0.4..0.6),
        wf * rng.random_range(0.28..0.36),
        hf * rng.random_range(0.25..0.33),
    );
    let fg = minus(&fg, &border);
    let bg_fruit = ellipse(
        w,
        h,
        wf * rng.random_range(0.1..0.9),
        hf * rng.random_range(0.05..0.2),
        wf * rng.random_range(0.15..0.3),
        hf * rng.random_range(0.08..0.15),
    );
    let bg_fruit = minus(&minus(&bg_fruit, &fg), &border);

    let defect_ids: Vec<CategoryId> = taxonomy.with_role(Role::Defect).map(|c| c.id).collect();
    let mut defects: Vec<(CategoryId, BinaryMask)> = Vec::new();
    let mut taken = BinaryMask::new(w, h);
    let (fx0, fy0, fx1, fy1) = fg.bbox().expect("fruit inside image");
    let wanted = rng.random_range(1..=4u32);
    for _ in 0..wanted * 8 {
        if defects.len() as u32 == wanted {
            break;
        }
        let cx = rng.random_range(fx0..=fx1) as f64;
        let cy = rng.random_range(fy0..=fy1) as f64;
        let r = rng.random_range(1.5..9.0);
        let blob = ellipse(w, h, cx, cy, r * rng.random_range(0.7..1.4), r);
        // keep blobs on the fruit and well apart from each other
        if blob.is_empty() || blob.intersection_area(&fg).unwrap() != blob.area() {
            continue;
        }
        let halo = crate::postprocess::dilate(&blob, 12);
        if halo.intersection_area(&taken).unwrap() > 0 {
            continue;
        }
        taken.union_with(&blob).unwrap();
        let cat = defect_ids[rng.random_range(0..defect_ids.len() as u32) as usize];
        defects.push((cat, blob));
    }

    let fruit = fg.union(&bg_fruit).unwrap();
    let background = minus(&minus(&BinaryMask::full(w, h), &fruit), &border);
    let role = |r| taxonomy.role_id(r).expect("taxonomy has all roles");
    let mut records: Vec<_> = [
        (role(Role::Background), background),
        (role(Role::FruitBackground), bg_fruit),
        (role(Role::FruitForeground), minus(&fg, &taken)),
    ]
    .into_iter()
    .filter(|(_, m)| !m.is_empty())
    .map(|(c, m)| record(image_id, c, m))
    .collect();
    records.extend(defects.iter().map(|(c, m)| record(image_id, *c, m.clone())));
    Scene {
        records,
        fruit: fg,
        defects,
    }
}

fn predict(rng: &mut ChaCha8Rng, gt: &PanopticMap, scene: &Scene, taxonomy: &Taxonomy) -> PanopticMap {
    let (w, h) = gt.dims();
    let lut = gt.category_lut(taxonomy.void_id());
    let fg_cat = taxonomy.role_id(Role::FruitForeground).expect("fg category");
    let bg_cat = taxonomy.role_id(Role::Background).expect("background category");
    let defect_ids: Vec<CategoryId> = taxonomy.with_role(Role::Defect).map(|c| c.id).collect();

    // stuff ids 1..; predictions see no void, the border becomes background
    let mut stuff: BTreeMap<CategoryId, SegmentId> = BTreeMap::new();
    let mut ids: Vec<SegmentId> = gt
        .ids()
        .iter()
        .map(|&s| {
            let cat = if s == VOID_ID { bg_cat } else { lut[s as usize] };
            let cat = if defect_ids.contains(&cat) { fg_cat } else { cat };
            let n = stuff.len() as SegmentId + 1;
            *stuff.entry(cat).or_insert(n)
        })
        .collect();
    let mut meta: BTreeMap<SegmentId, (CategoryId, Option<f64>)> =
        stuff.iter().map(|(&c, &s)| (s, (c, None))).collect();
    let mut next: SegmentId = 100;
    let mut paint = |ids: &mut Vec<SegmentId>, m: &BinaryMask, cat: CategoryId, score: f64| {
        for p in m.indices() {
            ids[p] = next;
        }
        meta.insert(next, (cat, Some(score)));
        next += 1;
    };

    for (cat, blob) in &scene.defects {
        if rng.random_bool(0.15) {
            continue;
        }
        let m = shifted(blob, rng.random_range(-1..=1), rng.random_range(-1..=1));
        let score = rng.random_range(0.3..1.0);
        let (x0, _, x1, _) = m.bbox().expect("shift keeps blob on the image");
        if x1 - x0 >= 4 && rng.random_bool(0.3) {
            let cut = (x0 + x1) / 2;
            let left = BinaryMask::from_fn(w, h, |x, y| x < cut && m.contains(x, y));
            let right = BinaryMask::from_fn(w, h, |x, y| x > cut && m.contains(x, y));
            paint(&mut ids, &left, *cat, score);
            paint(&mut ids, &right, *cat, score * 0.9);
        } else {
            paint(&mut ids, &m, *cat, score);
        }
    }
    if rng.random_bool(0.3) {
        let (fx0, fy0, fx1, fy1) = scene.fruit.bbox().expect("fruit");
        let blob = ellipse(
            w,
            h,
            rng.random_range(fx0..=fx1) as f64,
            rng.random_range(fy0..=fy1) as f64,
            3.0,
            2.0,
        );
        let blob = BinaryMask::from_fn(w, h, |x, y| blob.contains(x, y) && scene.fruit.contains(x, y));
        if !blob.is_empty() {
            let cat = defect_ids[rng.random_range(0..defect_ids.len() as u32) as usize];
            paint(&mut ids, &blob, cat, rng.random_range(0.05..0.5));
        }
    }
    PanopticMap::from_raster(w, h, ids, &meta).expect("prediction raster is consistent")
}

pub fn generate(config: &SynthConfig) -> SyntheticDataset {
    let taxonomy = Taxonomy::banana();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (w, h) = (config.width, config.height);
    let mut manifest = DatasetManifest {
        entries: Vec::new(),
        taxonomy: "taxonomy.json".into(),
    };
    let mut records = Vec::new();
    let mut ground_truth = Vec::new();
    let mut predictions = Vec::new();
    for i in 0..config.images {
        let image_id = format!("fruit_{i:03}");
        let s = scene(&mut rng, &image_id, w, h, &taxonomy);
        let (gt, warnings) = rasterize_annotations(&s.records, w, h, &taxonomy).expect("scene rasterizes");
        debug_assert!(warnings.is_empty());
        let pred = predict(&mut rng, &gt, &s, &taxonomy);
        manifest.entries.push(ManifestEntry {
            annotation_count: s.records.len(),
            height: h,
            image_id: image_id.clone(),
            image_path: format!("images/{image_id}.png"),
            width: w,
        });
        records.extend(s.records);
        ground_truth.push((image_id.clone(), gt));
        predictions.push((image_id, pred));
    }
    SyntheticDataset {
        taxonomy,
        manifest,
        records,
        ground_truth,
        predictions,
    }
}

/// LabelStudio-style export of `records`: one entry per image with a
/// rectangle result (and hand mask) per record.
pub fn labelstudio_export(records: &[AnnotationRecord], manifest: &DatasetManifest, taxonomy: &Taxonomy) -> String {
    let mut by_image: BTreeMap<&str, Vec<Value>> = BTreeMap::new();
    for r in records {
        let e = manifest.entry(&r.image_id).expect("record image in manifest");
        let PromptShape::Box {
            x_min,
            y_min,
            x_max,
            y_max,
        } = r.prompt.shape
        else {
            continue;
        };
        let pct = |v: u32, side: u32| v as f64 * 100.0 / side as f64;
        let name = &taxonomy.get(r.category_id()).expect("known category").name;
        let mut result = json!({
            "type": "rectanglelabels",
            "value": {
                "x": pct(x_min, e.width),
                "y": pct(y_min, e.height),
                "width": pct(x_max - x_min, e.width),
                "height": pct(y_max - y_min, e.height),
                "rectanglelabels": [name],
            },
        });
        if let Some(m) = &r.hand_mask {
            result["hand_mask"] = serde_json::to_value(RleMask::from_mask(m)).expect("rle serializes");
        }
        by_image.entry(&r.image_id).or_default().push(result);
    }
    let entries: Vec<Value> = by_image
        .into_iter()
        .map(|(id, result)| json!({"image_id": id, "result": result}))
        .collect();
    let mut s = serde_json::to_string_pretty(&entries).expect("export serializes");
    s.push('\n');
    s
}
