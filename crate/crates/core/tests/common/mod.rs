//! Random inputs and brute-force reference implementations shared by the
//! integration tests. The references work on plain `Vec`s of pixel ids and
//! never call into the crate's metric or postprocessing code.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use pangrade::{CategoryId, Kind, PanopticMap, Role, SegmentId, Taxonomy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn map_from(w: u32, h: u32, ids: Vec<u32>, meta: &[(u32, u32, Option<f64>)]) -> PanopticMap {
    let meta: BTreeMap<_, _> = meta.iter().map(|&(s, c, sc)| (s, (c, sc))).collect();
    PanopticMap::from_raster(w, h, ids, &meta).unwrap()
}

fn random_score(rng: &mut ChaCha8Rng) -> Option<f64> {
    match rng.random_range(0..4) {
        0 => None,
        1 => Some(0.5),
        _ => Some(rng.random_range(0.0..=1.0)),
    }
}

/// Up to `max_segments` rectangles painted over void, with random ids,
/// categories (at most one segment per stuff category) and scores.
pub fn random_map(rng: &mut ChaCha8Rng, w: u32, h: u32, max_segments: usize, taxonomy: &Taxonomy) -> PanopticMap {
    let cats: Vec<&pangrade::Category> = taxonomy.categories().iter().collect();
    let n = rng.random_range(1..=max_segments);
    let mut ids = vec![0u32; (w * h) as usize];
    let mut meta: BTreeMap<SegmentId, (CategoryId, Option<f64>)> = BTreeMap::new();
    let mut used_stuff = BTreeSet::new();
    for _ in 0..n {
        let seg = loop {
            let s = rng.random_range(1..=20u32);
            if !meta.contains_key(&s) {
                break s;
            }
        };
        let mut cat = cats[rng.random_range(0..cats.len())];
        if cat.kind == Kind::Stuff && !used_stuff.insert(cat.id) {
            let things: Vec<_> = cats.iter().filter(|c| c.kind == Kind::Thing).collect();
            cat = things[rng.random_range(0..things.len())];
        }
        meta.insert(seg, (cat.id, random_score(rng)));
        let x0 = rng.random_range(0..w);
        let y0 = rng.random_range(0..h);
        let x1 = rng.random_range(x0 + 1..=w);
        let y1 = rng.random_range(y0 + 1..=h);
        for y in y0..y1 {
            for x in x0..x1 {
                ids[(y * w + x) as usize] = seg;
            }
        }
    }
    PanopticMap::from_raster(w, h, ids, &meta).unwrap()
}

/// A prediction for `gt`: either independent, or `gt` with relabelled ids,
/// some pixels changed, and occasionally swapped categories.
pub fn random_prediction(rng: &mut ChaCha8Rng, gt: &PanopticMap, taxonomy: &Taxonomy) -> PanopticMap {
    let (w, h) = gt.dims();
    if rng.random_bool(0.3) {
        return random_map(rng, w, h, 6, taxonomy);
    }
    let mut relabel: BTreeMap<SegmentId, SegmentId> = BTreeMap::new();
    let mut meta: BTreeMap<SegmentId, (CategoryId, Option<f64>)> = BTreeMap::new();
    for s in gt.segments() {
        let new = loop {
            let c = rng.random_range(1..=30u32);
            if !meta.contains_key(&c) {
                break c;
            }
        };
        relabel.insert(s.segment_id, new);
        let mut cat = s.category_id;
        if taxonomy.get(cat).unwrap().kind == Kind::Thing && rng.random_bool(0.15) {
            let things: Vec<_> = taxonomy.categories().iter().filter(|c| c.kind == Kind::Thing).collect();
            cat = things[rng.random_range(0..things.len())].id;
        }
        meta.insert(new, (cat, random_score(rng)));
    }
    let pool: Vec<SegmentId> = meta.keys().copied().collect();
    let noise = rng.random_range(0.0..0.3);
    let ids: Vec<u32> = gt
        .ids()
        .iter()
        .map(|&g| {
            if rng.random_bool(noise) {
                if rng.random_bool(0.2) {
                    0
                } else {
                    pool[rng.random_range(0..pool.len())]
                }
            } else if g == 0 {
                0
            } else {
                relabel[&g]
            }
        })
        .collect();
    PanopticMap::from_raster(w, h, ids, &meta).unwrap()
}

// ---------------------------------------------------------------- metrics

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefCategory {
    pub iou: Option<f64>,
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ar: Option<f64>,
    pub pq: Option<f64>,
    pub sq: Option<f64>,
    pub rq: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefReport {
    pub categories: BTreeMap<CategoryId, RefCategory>,
    pub miou: Option<f64>,
    pub iou_defects: Option<f64>,
    pub iou_fg: Option<f64>,
    pub iou_bg: Option<f64>,
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ar: Option<f64>,
    pub pq: Option<f64>,
    pub sq: Option<f64>,
    pub rq: Option<f64>,
}

pub fn thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

fn mean_of(v: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = v.into_iter().flatten().collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

struct Seg {
    id: SegmentId,
    cat: CategoryId,
    score: f64,
    pixels: BTreeSet<usize>,
    image: usize,
}

fn segs(map: &PanopticMap, image: usize) -> Vec<Seg> {
    map.segments()
        .iter()
        .map(|s| Seg {
            id: s.segment_id,
            cat: s.category_id,
            score: s.score.unwrap_or(1.0),
            pixels: map
                .ids()
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == s.segment_id)
                .map(|(i, _)| i)
                .collect(),
            image,
        })
        .collect()
}

fn pixel_category(map: &PanopticMap, void: CategoryId) -> Vec<CategoryId> {
    map.ids()
        .iter()
        .map(|&id| {
            if id == 0 {
                void
            } else {
                map.segment(id).unwrap().category_id
            }
        })
        .collect()
}

/// AP by its definition: at every recall level r in {0, 0.01, ..., 1}, the
/// best precision over all rank cut-offs reaching recall >= r.
fn ap_from_flags(flags: &[bool], gt_count: usize) -> Option<f64> {
    if gt_count == 0 {
        return None;
    }
    let mut points = Vec::new();
    let mut tp = 0;
    for (i, &f) in flags.iter().enumerate() {
        tp += f as usize;
        points.push((tp as f64 / gt_count as f64, tp as f64 / (i + 1) as f64));
    }
    let mut sum = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let best = points
            .iter()
            .filter(|(rc, _)| *rc >= r)
            .map(|(_, p)| *p)
            .fold(0.0f64, f64::max);
        sum += best;
    }
    Some(sum / 101.0)
}

/// Reference evaluation of `(pred, gt)` pairs pooled as one dataset; image
/// order is the slice order.
/// (score, area, id, image, matched per threshold)
type RefDetection = (f64, u64, SegmentId, usize, Vec<bool>);

pub fn reference_evaluate(pairs: &[(&PanopticMap, &PanopticMap)], taxonomy: &Taxonomy) -> RefReport {
    let void = taxonomy.void_id();
    let is_void = |c: CategoryId| c == void;
    let ts = thresholds();

    let mut inter: BTreeMap<CategoryId, u64> = BTreeMap::new();
    let mut union: BTreeMap<CategoryId, u64> = BTreeMap::new();
    let mut present: BTreeSet<CategoryId> = BTreeSet::new();
    let mut pq: BTreeMap<CategoryId, (u64, u64, u64, f64)> = BTreeMap::new();
    // per category: (score, area, id, image, matched per threshold), gt count
    let mut dets: BTreeMap<CategoryId, Vec<RefDetection>> = BTreeMap::new();
    let mut gt_count: BTreeMap<CategoryId, usize> = BTreeMap::new();

    for (image, (pred, gt)) in pairs.iter().enumerate() {
        let pc = pixel_category(pred, void);
        let gc = pixel_category(gt, void);
        let cats: BTreeSet<CategoryId> = taxonomy
            .categories()
            .iter()
            .filter(|c| c.role != Role::Void)
            .map(|c| c.id)
            .collect();
        for &c in &cats {
            for i in 0..pc.len() {
                if is_void(gc[i]) {
                    continue;
                }
                if pc[i] == c && gc[i] == c {
                    *inter.entry(c).or_default() += 1;
                }
                if pc[i] == c || gc[i] == c {
                    *union.entry(c).or_default() += 1;
                }
            }
        }
        let ps = segs(pred, image);
        let gs = segs(gt, image);
        for s in ps.iter().chain(&gs) {
            if !is_void(s.cat) {
                present.insert(s.cat);
            }
        }

        // PQ
        let gt_void: BTreeSet<usize> = (0..gc.len()).filter(|&i| is_void(gc[i])).collect();
        let mut p_matched = BTreeSet::new();
        let mut g_matched = BTreeSet::new();
        for p in ps.iter().filter(|p| !is_void(p.cat)) {
            for g in gs.iter().filter(|g| g.cat == p.cat) {
                let n = p.pixels.intersection(&g.pixels).count() as u64;
                if n == 0 {
                    continue;
                }
                let on_void = p.pixels.intersection(&gt_void).count() as u64;
                let u = p.pixels.len() as u64 + g.pixels.len() as u64 - n - on_void;
                let v = n as f64 / u as f64;
                if v > 0.5 {
                    let e = pq.entry(p.cat).or_default();
                    e.0 += 1;
                    e.3 += v;
                    p_matched.insert(p.id);
                    g_matched.insert(g.id);
                }
            }
        }
        for g in gs.iter().filter(|g| !is_void(g.cat) && !g_matched.contains(&g.id)) {
            pq.entry(g.cat).or_default().2 += 1;
        }
        for p in ps.iter().filter(|p| !is_void(p.cat) && !p_matched.contains(&p.id)) {
            let on_void = p.pixels.intersection(&gt_void).count();
            if on_void * 2 > p.pixels.len() {
                continue;
            }
            pq.entry(p.cat).or_default().1 += 1;
        }

        // detection matching
        for c in present.clone() {
            if taxonomy.get(c).unwrap().kind != Kind::Thing {
                continue;
            }
            let mut cp: Vec<&Seg> = ps.iter().filter(|p| p.cat == c).collect();
            let mut cg: Vec<&Seg> = gs.iter().filter(|g| g.cat == c).collect();
            cg.sort_by_key(|g| g.id);
            cp.sort_by(|a, b| {
                b.score
                    .partial_cmp(&a.score)
                    .unwrap()
                    .then(b.pixels.len().cmp(&a.pixels.len()))
                    .then(a.id.cmp(&b.id))
            });
            let iou = |p: &Seg, g: &Seg| {
                let n = p.pixels.intersection(&g.pixels).count() as f64;
                n / (p.pixels.len() as f64 + g.pixels.len() as f64 - n)
            };
            let mut matched = vec![vec![false; ts.len()]; cp.len()];
            for (ti, &t) in ts.iter().enumerate() {
                let mut used = vec![false; cg.len()];
                for (pi, p) in cp.iter().enumerate() {
                    let mut best: Option<(usize, f64)> = None;
                    for (gi, g) in cg.iter().enumerate() {
                        let v = iou(p, g);
                        if used[gi] || v < t {
                            continue;
                        }
                        match best {
                            Some((_, b)) if v <= b => {}
                            _ => best = Some((gi, v)),
                        }
                    }
                    if let Some((gi, _)) = best {
                        used[gi] = true;
                        matched[pi][ti] = true;
                    }
                }
            }
            let list = dets.entry(c).or_default();
            for (p, m) in cp.iter().zip(matched) {
                list.push((p.score, p.pixels.len() as u64, p.id, p.image, m));
            }
            *gt_count.entry(c).or_default() += cg.len();
        }
    }
    let iou_of = |c: CategoryId| -> Option<f64> {
        let u = union.get(&c).copied().unwrap_or(0);
        (u > 0).then(|| inter.get(&c).copied().unwrap_or(0) as f64 / u as f64)
    };
    let mut out = RefReport::default();
    for &c in &present {
        let mut rc = RefCategory {
            iou: iou_of(c),
            ..Default::default()
        };
        if let Some(list) = dets.get_mut(&c) {
            list.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap()
                    .then(b.1.cmp(&a.1))
                    .then(a.2.cmp(&b.2))
                    .then(a.3.cmp(&b.3))
            });
            let g = gt_count.get(&c).copied().unwrap_or(0);
            let at = |ti: usize| {
                let flags: Vec<bool> = list.iter().map(|d| d.4[ti]).collect();
                ap_from_flags(&flags, g)
            };
            rc.ap = mean_of((0..ts.len()).map(at));
            rc.ap50 = at(0);
            rc.ap75 = at(5);
            rc.ar = mean_of(
                (0..ts.len()).map(|ti| (g > 0).then(|| list.iter().filter(|d| d.4[ti]).count() as f64 / g as f64)),
            );
        }
        if let Some(&(tp, fp, fn_, sum)) = pq.get(&c) {
            rc.tp = tp;
            rc.fp = fp;
            rc.fn_ = fn_;
            if tp + fp + fn_ > 0 {
                let denom = tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64;
                rc.pq = Some(sum / denom);
                rc.sq = Some(if tp == 0 { 0.0 } else { sum / tp as f64 });
                rc.rq = Some(tp as f64 / denom);
            }
        }
        out.categories.insert(c, rc);
    }
    let non_void: Vec<CategoryId> = union.keys().copied().collect();
    out.miou = mean_of(non_void.iter().map(|&c| iou_of(c)));
    let role_mean = |r: Role| mean_of(taxonomy.with_role(r).map(|c| iou_of(c.id)));
    out.iou_defects = role_mean(Role::Defect);
    out.iou_fg = role_mean(Role::FruitForeground);
    out.iou_bg = role_mean(Role::FruitBackground);
    let things: Vec<&RefCategory> = out
        .categories
        .iter()
        .filter(|(c, _)| taxonomy.get(**c).unwrap().kind == Kind::Thing)
        .map(|(_, r)| r)
        .collect();
    out.ap = mean_of(things.iter().map(|r| r.ap));
    out.ap50 = mean_of(things.iter().map(|r| r.ap50));
    out.ap75 = mean_of(things.iter().map(|r| r.ap75));
    out.ar = mean_of(things.iter().map(|r| r.ar));
    let pq_cats: Vec<&RefCategory> = out.categories.values().filter(|r| r.pq.is_some()).collect();
    out.pq = mean_of(pq_cats.iter().map(|r| r.pq));
    out.sq = mean_of(pq_cats.iter().map(|r| r.sq));
    out.rq = mean_of(pq_cats.iter().map(|r| r.rq));
    out
}

fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => false,
    }
}

/// Differences between a crate report and the reference, as readable lines.
pub fn compare_report(got: &pangrade::metrics::EvaluationReport, want: &RefReport, tol: f64) -> Vec<String> {
    let diffs = std::cell::RefCell::new(Vec::new());
    let check = |what: String, a: Option<f64>, b: Option<f64>| {
        if !close(a, b, tol) {
            diffs.borrow_mut().push(format!("{what}: got {a:?}, want {b:?}"));
        }
    };
    let o = &got.overall;
    check("miou".into(), o.miou, want.miou);
    check("iou_defects".into(), o.iou_defects, want.iou_defects);
    check("iou_fg".into(), o.iou_fg, want.iou_fg);
    check("iou_bg".into(), o.iou_bg, want.iou_bg);
    check("ap".into(), o.ap, want.ap);
    check("ap50".into(), o.ap50, want.ap50);
    check("ap75".into(), o.ap75, want.ap75);
    check("ar".into(), o.ar, want.ar);
    check("pq".into(), o.pq, want.pq);
    check("sq".into(), o.sq, want.sq);
    check("rq".into(), o.rq, want.rq);
    let got_ids: Vec<CategoryId> = got.categories.iter().map(|c| c.category_id).collect();
    let want_ids: Vec<CategoryId> = want.categories.keys().copied().collect();
    if got_ids != want_ids {
        diffs
            .borrow_mut()
            .push(format!("categories: got {got_ids:?}, want {want_ids:?}"));
        return diffs.into_inner();
    }
    for c in &got.categories {
        let r = &want.categories[&c.category_id];
        let id = c.category_id;
        check(format!("{id}/iou"), c.iou, r.iou);
        check(format!("{id}/ap"), c.ap, r.ap);
        check(format!("{id}/ap50"), c.ap50, r.ap50);
        check(format!("{id}/ap75"), c.ap75, r.ap75);
        check(format!("{id}/ar"), c.ar, r.ar);
        check(format!("{id}/pq"), c.pq, r.pq);
        check(format!("{id}/sq"), c.sq, r.sq);
        check(format!("{id}/rq"), c.rq, r.rq);
        if (c.tp, c.fp, c.fn_) != (r.tp, r.fp, r.fn_) {
            diffs.borrow_mut().push(format!(
                "{id}/counts: got {:?}, want {:?}",
                (c.tp, c.fp, c.fn_),
                (r.tp, r.fp, r.fn_)
            ));
        }
    }
    diffs.into_inner()
}

// ------------------------------------------------------------ postprocess

/// Connected components by breadth-first search, in order of first pixel.
pub fn bfs_components(w: usize, h: usize, on: &[bool], eight: bool) -> Vec<Vec<usize>> {
    let mut seen = vec![false; on.len()];
    let mut comps = Vec::new();
    for start in 0..on.len() {
        if !on[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(p) = queue.pop_front() {
            comp.push(p);
            let (x, y) = ((p % w) as i64, (p / w) as i64);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if (dx, dy) == (0, 0) || (!eight && dx != 0 && dy != 0) {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if on[q] && !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Minimum Chebyshev distance between two pixel sets, all pairs.
pub fn chebyshev_distance(w: usize, a: &[usize], b: &[usize]) -> usize {
    let mut best = usize::MAX;
    for &p in a {
        let (px, py) = (p % w, p / w);
        for &q in b {
            let (qx, qy) = (q % w, q / w);
            best = best.min(px.abs_diff(qx).max(py.abs_diff(qy)));
        }
    }
    best
}

/// All-pairs component distances for reuse across several `d`.
pub fn distance_matrix(w: usize, comps: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = comps.len();
    let mut m = vec![vec![0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = chebyshev_distance(w, &comps[i], &comps[j]);
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    m
}

/// Single-linkage clusters at `dist <= threshold`, as sorted pixel lists.
pub fn single_linkage(comps: &[Vec<usize>], dist: &[Vec<usize>], threshold: usize) -> Vec<Vec<usize>> {
    let n = comps.len();
    let mut cluster: Vec<usize> = (0..n).collect();
    // repeated relabelling until stable: plain transitive closure
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if i != j && dist[i][j] <= threshold && cluster[i] != cluster[j] {
                    let (keep, drop) = (cluster[i].min(cluster[j]), cluster[i].max(cluster[j]));
                    for c in cluster.iter_mut() {
                        if *c == drop {
                            *c = keep;
                        }
                    }
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in comps.iter().enumerate() {
        groups.entry(cluster[i]).or_default().extend(c);
    }
    let mut out: Vec<Vec<usize>> = groups
        .into_values()
        .map(|mut g| {
            g.sort_unstable();
            g
        })
        .collect();
    out.sort();
    out
}

/// Pixel sets of the segments of `map` in category `cat`, sorted.
pub fn instance_pixel_sets(map: &PanopticMap, cat: CategoryId) -> Vec<Vec<usize>> {
    let mut by_id: BTreeMap<SegmentId, Vec<usize>> = BTreeMap::new();
    for (i, &id) in map.ids().iter().enumerate() {
        if id != 0 && map.segment(id).unwrap().category_id == cat {
            by_id.entry(id).or_default().push(i);
        }
    }
    let mut out: Vec<Vec<usize>> = by_id.into_values().collect();
    out.sort();
    out
}

/// Random sparse defect layout on a fruit background: small rectangles and
/// isolated pixels of one or two defect categories.
pub fn random_defect_map(rng: &mut ChaCha8Rng, two_categories: bool) -> PanopticMap {
    let w = rng.random_range(1..=128u32);
    let h = rng.random_range(1..=128u32);
    let mut ids = vec![1u32; (w * h) as usize];
    let mut meta = vec![(1u32, 5u32, None)];
    let blobs = rng.random_range(0..=14);
    for next in 2..2 + blobs as u32 {
        let cat = if two_categories && rng.random_bool(0.5) { 1 } else { 4 };
        let bw = rng.random_range(1..=6u32).min(w);
        let bh = rng.random_range(1..=6u32).min(h);
        let x0 = rng.random_range(0..=w - bw);
        let y0 = rng.random_range(0..=h - bh);
        let sparse = rng.random_bool(0.3);
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                if !sparse || rng.random_bool(0.4) {
                    ids[(y * w + x) as usize] = next;
                }
            }
        }
        let score = if rng.random_bool(0.8) {
            Some(rng.random_range(0.0..=1.0))
        } else {
            None
        };
        meta.push((next, cat, score));
    }
    map_from(w, h, ids, &meta)
}

pub fn synth_fixture() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synth")
}

pub fn cli(args: &[&str]) -> i32 {
    pangrade::cli::run(std::iter::once("pangrade").chain(args.iter().copied()))
}

/// Runs the full pipeline on the bundled fixture, writing under `out`.
pub fn run_pipeline(out: &std::path::Path, jobs: usize) -> Result<(), String> {
    let fx = synth_fixture();
    let p = |rel: &str| out.join(rel).to_string_lossy().into_owned();
    let f = |rel: &str| fx.join(rel).to_string_lossy().into_owned();
    let jobs = jobs.to_string();
    let tax = f("taxonomy.json");
    let common = ["--jobs", jobs.as_str(), "--taxonomy", tax.as_str()];
    let mut steps: Vec<Vec<String>> = vec![
        vec![
            "ingest".into(),
            "--export".into(),
            f("export.json"),
            "--manifest".into(),
            f("manifest.json"),
            "--out".into(),
            p("ingest"),
            "--rasterize".into(),
        ],
        vec![
            "postprocess".into(),
            "--input".into(),
            f("pred"),
            "--out".into(),
            p("post"),
        ],
        vec![
            "evaluate".into(),
            "--pred".into(),
            p("post"),
            "--gt".into(),
            p("ingest/gt"),
            "--out".into(),
            p("eval"),
        ],
        vec!["grade".into(), "--input".into(), p("post"), "--out".into(), p("grade")],
        vec![
            "split".into(),
            "--manifest".into(),
            f("manifest.json"),
            "--k".into(),
            "3".into(),
            "--out".into(),
            p("splits.json"),
        ],
    ];
    for fold in 0..3 {
        steps.push(vec![
            "evaluate".into(),
            "--pred".into(),
            p("post"),
            "--gt".into(),
            p("ingest/gt"),
            "--out".into(),
            p(&format!("fold{fold}")),
            "--splits".into(),
            p("splits.json"),
            "--fold".into(),
            fold.to_string(),
        ]);
    }
    steps.push(vec![
        "report".into(),
        "--folds".into(),
        p("fold0/report.json"),
        p("fold1/report.json"),
        p("fold2/report.json"),
        "--out".into(),
        p("report"),
        "--drop-partial".into(),
    ]);
    steps.push(vec![
        "agreement".into(),
        "counts".into(),
        "--annotated".into(),
        p("ingest/gt"),
        "--predicted".into(),
        p("post"),
        "--out".into(),
        p("agreement"),
    ]);
    for step in steps {
        let mut args: Vec<&str> = common.to_vec();
        args.extend(step.iter().map(String::as_str));
        let code = cli(&args);
        if code != 0 {
            return Err(format!("`{}` exited with {code}", step.join(" ")));
        }
    }
    Ok(())
}

/// Every file under `dir`, keyed by relative path.
pub fn tree_bytes(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
