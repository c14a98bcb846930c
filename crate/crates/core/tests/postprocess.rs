mod common;

use common::*;
use pangrade::postprocess::{connected_components, dilate, postprocess_instances, Connectivity, PostprocessConfig};
use pangrade::{to_semantic, BinaryMask, PanopticMap, Taxonomy};
use proptest::prelude::*;

const RADII: [u32; 5] = [0, 1, 3, 5, 9];

fn config(d: u32) -> PostprocessConfig {
    PostprocessConfig {
        dilation: d,
        connectivity: Connectivity::Eight,
    }
}

/// Checks grouping against single linkage for every thing category.
fn check_against_reference(map: &PanopticMap, d: u32, conn: Connectivity) {
    let t = Taxonomy::banana();
    let out = postprocess_instances(
        map,
        &t,
        &PostprocessConfig {
            dilation: d,
            connectivity: conn,
        },
    );
    let (w, h) = (map.width() as usize, map.height() as usize);
    assert_eq!(to_semantic(&out, &t), to_semantic(map, &t), "category raster changed");
    for cat in [1u32, 2, 3, 4] {
        let on: Vec<bool> = map
            .ids()
            .iter()
            .map(|&id| id != 0 && map.segment(id).unwrap().category_id == cat)
            .collect();
        let comps = bfs_components(w, h, &on, conn == Connectivity::Eight);
        let dist = distance_matrix(w, &comps);
        let want = single_linkage(&comps, &dist, 2 * d as usize);
        assert_eq!(instance_pixel_sets(&out, cat), want, "category {cat}, d = {d}");
    }
    let again = postprocess_instances(
        &out,
        &t,
        &PostprocessConfig {
            dilation: d,
            connectivity: conn,
        },
    );
    assert_eq!(again, out, "not idempotent at d = {d}");
}

#[test]
fn grouping_matches_single_linkage() {
    for seed in 0..120 {
        let map = random_defect_map(&mut rng(seed), seed % 3 == 0);
        for d in RADII {
            check_against_reference(&map, d, Connectivity::Eight);
        }
    }
}

#[test]
fn four_connectivity_matches_reference() {
    for seed in 1000..1040 {
        let map = random_defect_map(&mut rng(seed), true);
        for d in [0, 2] {
            check_against_reference(&map, d, Connectivity::Four);
        }
    }
}

fn two_pixels(dx: u32, dy: u32) -> PanopticMap {
    let (w, h) = (dx + 3, dy + 3);
    let mut ids = vec![1u32; (w * h) as usize];
    ids[(w + 1) as usize] = 2;
    ids[((1 + dy) * w + 1 + dx) as usize] = 3;
    map_from(w, h, ids, &[(1, 5, None), (2, 4, Some(0.2)), (3, 4, Some(0.8))])
}

fn defect_count(m: &PanopticMap) -> usize {
    m.segments().iter().filter(|s| s.category_id == 4).count()
}

#[test]
fn merge_boundary_is_exactly_2d() {
    let t = Taxonomy::banana();
    for d in RADII {
        let at = 2 * d;
        for (dx, dy) in [(at, 0), (0, at), (at, at), (at, at / 2)] {
            if dx.max(dy) == 0 {
                continue;
            }
            assert_eq!(
                defect_count(&postprocess_instances(&two_pixels(dx, dy), &t, &config(d))),
                1,
                "d={d} ({dx},{dy})"
            );
        }
        if d == 0 {
            // one pixel apart is already one 8-connected component
            let four = PostprocessConfig {
                dilation: 0,
                connectivity: Connectivity::Four,
            };
            assert_eq!(defect_count(&postprocess_instances(&two_pixels(1, 1), &t, &four)), 2);
            continue;
        }
        for (dx, dy) in [(at + 1, 0), (0, at + 1), (at + 1, at + 1), (at + 1, at / 2)] {
            assert_eq!(
                defect_count(&postprocess_instances(&two_pixels(dx, dy), &t, &config(d))),
                2,
                "d={d} ({dx},{dy})"
            );
        }
    }
}

#[test]
fn blobs_ten_apart_merge_at_d5() {
    let t = Taxonomy::banana();
    let blob_pair = |gap: u32| {
        // two 3x3 blobs whose nearest columns are `gap` apart
        let w = 3 + gap + 3 + 2;
        let h = 5;
        let ids: Vec<u32> = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                if (1..4).contains(&y) && (1..4).contains(&x) {
                    2
                } else if (1..4).contains(&y) && (3 + gap..6 + gap).contains(&x) {
                    3
                } else {
                    1
                }
            })
            .collect();
        map_from(w, h, ids, &[(1, 5, None), (2, 1, Some(0.6)), (3, 1, Some(0.9))])
    };
    let merged = postprocess_instances(&blob_pair(10), &t, &PostprocessConfig::default());
    assert_eq!(merged.segments().iter().filter(|s| s.category_id == 1).count(), 1);
    let score = merged
        .segments()
        .iter()
        .find(|s| s.category_id == 1)
        .unwrap()
        .score
        .unwrap();
    assert!((score - 0.75).abs() < 1e-12);
    let apart = postprocess_instances(&blob_pair(11), &t, &PostprocessConfig::default());
    assert_eq!(apart.segments().iter().filter(|s| s.category_id == 1).count(), 2);
}

#[test]
fn categories_never_merge() {
    let t = Taxonomy::banana();
    let ids = vec![1, 2, 3, 1];
    let m = map_from(4, 1, ids, &[(1, 5, None), (2, 4, None), (3, 1, None)]);
    let out = postprocess_instances(&m, &t, &config(9));
    assert_eq!(out.segments().len(), 3);
}

#[test]
fn ids_ascend_by_first_pixel_above_stuff() {
    let t = Taxonomy::banana();
    // stuff id 7; defects painted bottom-up with decreasing ids
    let mut ids = vec![7u32; 100];
    ids[90] = 2;
    ids[50] = 3;
    ids[5] = 4;
    let m = map_from(10, 10, ids, &[(7, 5, None), (2, 1, None), (3, 2, None), (4, 3, None)]);
    let out = postprocess_instances(&m, &t, &config(0));
    assert_eq!(out.id_at(5, 0), 8);
    assert_eq!(out.id_at(0, 5), 9);
    assert_eq!(out.id_at(0, 9), 10);
    assert_eq!(out.id_at(1, 1), 7);
}

/// Brute-force square dilation.
fn dilate_reference(m: &BinaryMask, d: u32) -> BinaryMask {
    let (w, h) = m.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        let (x0, y0) = (x.saturating_sub(d), y.saturating_sub(d));
        let (x1, y1) = ((x + d).min(w - 1), (y + d).min(h - 1));
        (y0..=y1).any(|yy| (x0..=x1).any(|xx| m.contains(xx, yy)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dilation_matches_reference(w in 1u32..40, h in 1u32..40, d in 0u32..7, bits in proptest::collection::vec(any::<bool>(), 1600)) {
        let m = BinaryMask::from_fn(w, h, |x, y| bits[(y * 40 + x) as usize] && (x * 7 + y * 3) % 5 == 0);
        prop_assert_eq!(dilate(&m, d), dilate_reference(&m, d));
    }

    #[test]
    fn components_partition_the_mask(w in 1u32..40, h in 1u32..40, bits in proptest::collection::vec(any::<bool>(), 1600)) {
        let m = BinaryMask::from_fn(w, h, |x, y| bits[(y * 40 + x) as usize]);
        for conn in [Connectivity::Four, Connectivity::Eight] {
            let comps = connected_components(&m, conn);
            let total: u64 = comps.iter().map(|c| c.area()).sum();
            prop_assert_eq!(total, m.area());
            let on: Vec<bool> = (0..(w * h) as usize).map(|i| m.contains_index(i)).collect();
            let want = bfs_components(w as usize, h as usize, &on, conn == Connectivity::Eight);
            let got: Vec<Vec<usize>> = comps.iter().map(|c| c.indices().collect()).collect();
            prop_assert_eq!(got, want);
        }
    }
}
