//! Instance postprocessing: flatten each thing category, split it into
//! connected components, and merge components whose dilations overlap.
//!
//! With a square (Chebyshev) structuring element of radius `d`, the
//! dilations of two components overlap exactly when their minimum
//! Chebyshev distance is at most `2d`, so the resulting groups are the
//! single-linkage clusters of the components at that threshold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BinaryMask;
use crate::panoptic::{PanopticMap, SegmentId, VOID_ID};
use crate::taxonomy::{CategoryId, Kind, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub fn from_neighbours(n: u8) -> Option<Self> {
        match n {
            4 => Some(Connectivity::Four),
            8 => Some(Connectivity::Eight),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostprocessConfig {
    /// Dilation radius in pixels.
    pub dilation: u32,
    pub connectivity: Connectivity,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            dilation: 5,
            connectivity: Connectivity::Eight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PostprocessError {
    #[error("category {0} is not a thing category")]
    NotAThingCategory(CategoryId),
    #[error("category {0} is not in the taxonomy")]
    UnknownCategory(CategoryId),
}

/// Union of all instances of a thing category.
pub fn flatten_category(
    map: &PanopticMap,
    taxonomy: &Taxonomy,
    category_id: CategoryId,
) -> Result<BinaryMask, PostprocessError> {
    let cat = taxonomy
        .get(category_id)
        .ok_or(PostprocessError::UnknownCategory(category_id))?;
    if cat.kind != Kind::Thing {
        return Err(PostprocessError::NotAThingCategory(category_id));
    }
    let lut = map.category_lut(0);
    let idx = map
        .ids()
        .iter()
        .enumerate()
        .filter(|(_, &id)| id != VOID_ID && lut[id as usize] == category_id)
        .map(|(i, _)| i);
    Ok(BinaryMask::from_indices(map.width(), map.height(), idx).expect("indices inside grid"))
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
        }
    }

    fn push(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so labels stay stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass union-find labelling over `is_set(index)`.
///
/// Returns the label raster (0 = background, components numbered from 1 in
/// order of their first pixel in row-major scan) and the component count.
fn label(width: u32, height: u32, conn: Connectivity, is_set: impl Fn(usize) -> bool) -> (Vec<u32>, u32) {
    let (w, h) = (width as usize, height as usize);
    let mut labels = vec![0u32; w * h];
    let mut ds = DisjointSet::new(1);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !is_set(i) {
                continue;
            }
            let mut neigh = [0u32; 4];
            let mut n = 0;
            if x > 0 && labels[i - 1] != 0 {
                neigh[n] = labels[i - 1];
                n += 1;
            }
            if y > 0 {
                let up = i - w;
                if labels[up] != 0 {
                    neigh[n] = labels[up];
                    n += 1;
                }
                if conn == Connectivity::Eight {
                    if x > 0 && labels[up - 1] != 0 {
                        neigh[n] = labels[up - 1];
                        n += 1;
                    }
                    if x + 1 < w && labels[up + 1] != 0 {
                        neigh[n] = labels[up + 1];
                        n += 1;
                    }
                }
            }
            if n == 0 {
                labels[i] = ds.push();
            } else {
                let first = neigh[0];
                labels[i] = first;
                for &other in &neigh[1..n] {
                    ds.union(first, other);
                }
            }
        }
    }
    let mut remap = vec![0u32; ds.parent.len()];
    let mut count = 0u32;
    for l in labels.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = ds.find(*l) as usize;
        if remap[root] == 0 {
            count += 1;
            remap[root] = count;
        }
        *l = remap[root];
    }
    (labels, count)
}

/// Maximal connected components, ordered by their first pixel in row-major
/// scan order (smallest row, then smallest column).
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<BinaryMask> {
    let (labels, count) = label(mask.width(), mask.height(), connectivity, |i| mask.contains_index(i));
    let mut out = vec![BinaryMask::new(mask.width(), mask.height()); count as usize];
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 {
            out[l as usize - 1].insert_index(i);
        }
    }
    out
}

/// Running-window maximum along rows then columns: every cell within
/// Chebyshev distance `d` of a set cell becomes set.
fn dilate_grid(grid: &[bool], w: usize, h: usize, d: usize) -> Vec<bool> {
    if d == 0 {
        return grid.to_vec();
    }
    let mut rows = vec![false; w * h];
    for y in 0..h {
        let row = &grid[y * w..(y + 1) * w];
        let out = &mut rows[y * w..(y + 1) * w];
        sweep(row.iter().copied(), w, d, |x, v| out[x] = v);
    }
    let mut cols = vec![false; w * h];
    for x in 0..w {
        sweep((0..h).map(|y| rows[y * w + x]), h, d, |y, v| cols[y * w + x] = v);
    }
    cols
}

/// Sets out[i] = any(line[i-d ..= i+d]).
fn sweep(line: impl Iterator<Item = bool> + Clone, n: usize, d: usize, mut put: impl FnMut(usize, bool)) {
    let vals: Vec<bool> = line.collect();
    let mut count = 0usize;
    // window initially covers [0, d]
    for &v in vals.iter().take(d.min(n - 1) + 1) {
        count += v as usize;
    }
    for i in 0..n {
        put(i, count > 0);
        let enter = i + d + 1;
        if enter < n {
            count += vals[enter] as usize;
        }
        if i >= d {
            count -= vals[i - d] as usize;
        }
    }
}

/// Chebyshev-ball dilation of radius `d`, clipped to the grid.
pub fn dilate(mask: &BinaryMask, d: u32) -> BinaryMask {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let grid: Vec<bool> = (0..w * h).map(|i| mask.contains_index(i)).collect();
    let out = dilate_grid(&grid, w, h, d as usize);
    BinaryMask::from_indices(
        mask.width(),
        mask.height(),
        out.iter().enumerate().filter(|(_, &v)| v).map(|(i, _)| i),
    )
    .expect("indices inside grid")
}

struct Component {
    pixels: Vec<usize>,
    bbox: (usize, usize, usize, usize),
}

/// Groups the components of one label raster whose `d`-dilations overlap.
/// Returns, per component, the index of its group; groups are numbered by
/// their first member.
fn group_components(comps: &[Component], width: usize, height: usize, d: usize, claim: &mut [u32]) -> Vec<u32> {
    let mut ds = DisjointSet::new(comps.len());
    let mut touched = Vec::new();
    for (k, c) in comps.iter().enumerate() {
        let (x0, y0, x1, y1) = c.bbox;
        let lx0 = x0.saturating_sub(d);
        let ly0 = y0.saturating_sub(d);
        let lx1 = (x1 + d).min(width - 1);
        let ly1 = (y1 + d).min(height - 1);
        let (lw, lh) = (lx1 - lx0 + 1, ly1 - ly0 + 1);
        let mut local = vec![false; lw * lh];
        for &p in &c.pixels {
            let (x, y) = (p % width, p / width);
            local[(y - ly0) * lw + (x - lx0)] = true;
        }
        let grown = dilate_grid(&local, lw, lh, d);
        for (li, &v) in grown.iter().enumerate() {
            if !v {
                continue;
            }
            let p = (ly0 + li / lw) * width + lx0 + li % lw;
            let owner = claim[p];
            if owner == 0 {
                claim[p] = k as u32 + 1;
                touched.push(p);
            } else {
                ds.union(owner - 1, k as u32);
            }
        }
    }
    for p in touched {
        claim[p] = 0;
    }
    (0..comps.len() as u32).map(|k| ds.find(k)).collect()
}

/// Regroups the instances of every thing category.
///
/// Stuff segments keep their ids and pixels. Every pixel keeps its
/// category; only thing instance membership changes. Merged instances get
/// fresh ids above the largest retained id, ascending by first pixel.
/// A merged score is the pixel-weighted mean of the source segments'
/// scores, or absent when any source segment has none.
pub fn postprocess_instances(map: &PanopticMap, taxonomy: &Taxonomy, config: &PostprocessConfig) -> PanopticMap {
    let (width, height) = (map.width() as usize, map.height() as usize);
    let ids = map.ids();
    let lut = map.category_lut(0);
    let is_thing = |cat: CategoryId| taxonomy.get(cat).is_some_and(|c| c.kind == Kind::Thing);

    let mut thing_cats: Vec<CategoryId> = map
        .segments()
        .iter()
        .map(|s| s.category_id)
        .filter(|&c| is_thing(c))
        .collect();
    thing_cats.sort_unstable();
    thing_cats.dedup();

    let mut out_ids = ids.to_vec();
    let mut meta: BTreeMap<SegmentId, (CategoryId, Option<f64>)> = BTreeMap::new();
    for s in map.segments() {
        if !is_thing(s.category_id) {
            meta.insert(s.segment_id, (s.category_id, s.score));
        }
    }
    let base_id = meta.keys().next_back().copied().unwrap_or(0);

    // (first pixel, category, pixels) per merged group
    let mut groups: Vec<(usize, CategoryId, Vec<usize>)> = Vec::new();
    let mut claim = vec![0u32; width * height];
    for &cat in &thing_cats {
        let in_cat = |i: usize| ids[i] != VOID_ID && lut[ids[i] as usize] == cat;
        let (labels, count) = label(map.width(), map.height(), config.connectivity, in_cat);
        let mut comps: Vec<Component> = (0..count)
            .map(|_| Component {
                pixels: Vec::new(),
                bbox: (usize::MAX, usize::MAX, 0, 0),
            })
            .collect();
        for (i, &l) in labels.iter().enumerate() {
            if l == 0 {
                continue;
            }
            let c = &mut comps[l as usize - 1];
            let (x, y) = (i % width, i / width);
            c.pixels.push(i);
            c.bbox.0 = c.bbox.0.min(x);
            c.bbox.1 = c.bbox.1.min(y);
            c.bbox.2 = c.bbox.2.max(x);
            c.bbox.3 = c.bbox.3.max(y);
        }
        let roots = group_components(&comps, width, height, config.dilation as usize, &mut claim);
        let mut by_root: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (k, c) in comps.into_iter().enumerate() {
            by_root.entry(roots[k]).or_default().extend(c.pixels);
        }
        for (_, mut pixels) in by_root {
            pixels.sort_unstable();
            groups.push((pixels[0], cat, pixels));
        }
    }
    groups.sort_unstable_by_key(|g| g.0);

    for (n, (_, cat, pixels)) in groups.iter().enumerate() {
        let new_id = base_id + 1 + n as SegmentId;
        let mut weights: BTreeMap<SegmentId, u64> = BTreeMap::new();
        for &p in pixels {
            *weights.entry(ids[p]).or_insert(0) += 1;
            out_ids[p] = new_id;
        }
        let score = merged_score(map, &weights);
        meta.insert(new_id, (*cat, score));
    }

    PanopticMap::from_raster(map.width(), map.height(), out_ids, &meta)
        .expect("postprocessing relabels existing pixels only")
}

fn merged_score(map: &PanopticMap, weights: &BTreeMap<SegmentId, u64>) -> Option<f64> {
    let mut members = Vec::with_capacity(weights.len());
    for (&id, &w) in weights {
        members.push((map.segment(id)?.score?, w));
    }
    if let [(s, _)] = members[..] {
        return Some(s);
    }
    let total: u64 = members.iter().map(|m| m.1).sum();
    let mean = members.iter().map(|&(s, w)| s * w as f64).sum::<f64>() / total as f64;
    Some(mean.clamp(0.0, 1.0))
}
