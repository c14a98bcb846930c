mod common;

use std::collections::BTreeMap;

use common::*;
use pangrade::{iou, to_semantic, BinaryMask, MapError, PanopticMap, SegmentInfo, Taxonomy};
use proptest::prelude::*;
use rand::Rng;

fn random_mask(seed: u64, w: u32, h: u32) -> BinaryMask {
    let mut r = rng(seed);
    let density = r.random_range(0.0..1.0);
    BinaryMask::from_fn(w, h, |_, _| r.random_bool(density))
}

/// IoU from plain pixel counts.
fn iou_reference(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (mut inter, mut union) = (0u64, 0u64);
    for y in 0..a.height() {
        for x in 0..a.width() {
            let (p, q) = (a.contains(x, y), b.contains(x, y));
            inter += (p && q) as u64;
            union += (p || q) as u64;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[test]
fn empty_masks_agree_and_sizes_must_match() {
    let e = BinaryMask::new(3, 3);
    assert_eq!(iou(&e, &e).unwrap(), 1.0);
    assert!(iou(&e, &BinaryMask::new(3, 4)).is_err());
}

#[test]
fn constructor_rejects_disagreeing_tables() {
    let seg = |id, area| SegmentInfo {
        segment_id: id,
        category_id: 5,
        area,
        score: None,
    };
    assert!(PanopticMap::new(2, 1, vec![1, 1], vec![seg(1, 2)]).is_ok());
    assert!(matches!(
        PanopticMap::new(2, 1, vec![1, 2], vec![seg(1, 1)]),
        Err(MapError::IdNotInTable(2))
    ));
    assert!(PanopticMap::new(2, 1, vec![1, 1], vec![seg(1, 2), seg(2, 0)]).is_err());
    assert!(PanopticMap::new(2, 1, vec![1, 1], vec![seg(1, 3)]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn iou_matches_reference_and_is_symmetric(w in 1u32..80, h in 1u32..80, s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = random_mask(s1, w, h);
        let b = random_mask(s2, w, h);
        let v = iou(&a, &b).unwrap();
        prop_assert!((v - iou_reference(&a, &b)).abs() < 1e-12);
        prop_assert_eq!(v, iou(&b, &a).unwrap());
        prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
        if !a.is_empty() && !b.is_empty() {
            prop_assert_eq!(v == 1.0, a == b);
        }
    }

    #[test]
    fn semantic_raster_regroups_to_segment_areas(seed in any::<u64>()) {
        let t = Taxonomy::banana();
        let mut r = rng(seed);
        let (w, h) = (r.random_range(1..=64), r.random_range(1..=64));
        let map = random_map(&mut r, w, h, 6, &t);
        let sem = to_semantic(&map, &t);
        let mut by_id: BTreeMap<u32, (u32, u64)> = BTreeMap::new();
        for (&id, &cat) in map.ids().iter().zip(&sem) {
            if id != 0 {
                let e = by_id.entry(id).or_insert((cat, 0));
                prop_assert_eq!(e.0, cat);
                e.1 += 1;
            }
        }
        for s in map.segments() {
            prop_assert_eq!(by_id[&s.segment_id], (s.category_id, s.area));
        }
    }
}
