mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use logodet_core::metrics::BoundingBox;
use logodet_core::segmentation::{segment_graph, SegmentationParams};
use logodet_core::selective_search::{
    boxes_at_scale, grouping_pass, initial_regions, neighbor_pairs, pixel_features, proposal_order,
    propose, read_proposals, similarity, write_proposals, ModeTag, RegionNode, SearchMode,
    MIN_PROPOSAL_SIDE,
};
use logodet_core::Image;

/// Quadratic re-scan of every live adjacent pair at each step.
fn brute_force_grouping(
    mut regions: Vec<RegionNode>,
    mut pairs: BTreeSet<(usize, usize)>,
    image_size: usize,
) -> Vec<(usize, usize, f64)> {
    let mut merges = Vec::new();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for &(a, b) in &pairs {
            let s = similarity(&regions[a], &regions[b], image_size);
            let better = match best {
                None => true,
                Some((bs, ba, bb)) => s > bs || (s == bs && (a, b) < (ba, bb)),
            };
            if better {
                best = Some((s, a, b));
            }
        }
        let Some((s, a, b)) = best else { break };
        let id = regions.len();
        regions.push(regions[a].merge(&regions[b], id));
        merges.push((a, b, s));
        let mut next = BTreeSet::new();
        for &(p, q) in &pairs {
            let map = |v: usize| if v == a || v == b { id } else { v };
            let (p, q) = (map(p), map(q));
            if p != q {
                next.insert((p.min(q), p.max(q)));
            }
        }
        pairs = next;
    }
    merges
}

fn textured_image() -> impl Strategy<Value = Image> {
    (6usize..20, 6usize..20, any::<u32>()).prop_map(|(w, h, salt)| {
        Image::from_fn(w, h, |x, y| {
            let v = (x as u32 * 31 + y as u32 * 17 + salt) ^ (salt >> 7);
            [(v % 200) as u8 + 20, ((v / 3) % 160) as u8, ((x * y) % 255) as u8]
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn heap_grouping_matches_brute_force(img in textured_image(), k in 20.0f64..200.0) {
        let labeling = segment_graph(&img, &SegmentationParams::new(k, 2, 0.8));
        let regions = initial_regions(&labeling, &pixel_features(&img));
        let expected = brute_force_grouping(regions, neighbor_pairs(&labeling), img.len());
        let got = grouping_pass(&img, &labeling).unwrap();
        prop_assert_eq!(got.merges, expected);
        prop_assert_eq!(got.boxes.len(), 2 * labeling.segment_count() - 1);
    }

    #[test]
    fn proposals_are_sorted_unique_and_large(img in textured_image()) {
        let img = Image::from_fn(img.width() * 3, img.height() * 3, |x, y| img.get(x / 3, y / 3));
        let set = propose(&img, &SearchMode::fast(), "p");
        for w in set.boxes.windows(2) {
            prop_assert_eq!(proposal_order(&w[0], &w[1]), std::cmp::Ordering::Less);
        }
        for b in &set.boxes {
            prop_assert!(b.width() >= MIN_PROPOSAL_SIDE && b.height() >= MIN_PROPOSAL_SIDE);
            prop_assert!(b.fits_within(img.width(), img.height()));
        }
        // the final merge always yields the full-image box
        prop_assume!(img.width() >= 20 && img.height() >= 20);
        prop_assert_eq!(set.boxes[0], BoundingBox::new(0, 0, img.width() as u32, img.height() as u32).unwrap());
    }
}

#[test]
fn quadrants_group_into_seven_boxes() {
    let img = common::quadrants();
    let labeling = segment_graph(&img, &SegmentationParams::new(50.0, 1, 0.0));
    let result = grouping_pass(&img, &labeling).unwrap();
    assert_eq!(result.boxes.len(), 7);
    assert_eq!(result.boxes[6], BoundingBox::new(0, 0, 8, 8).unwrap());
    let quarters: BTreeSet<_> = result.boxes[..4].iter().copied().collect();
    let want: BTreeSet<_> = [(0, 0), (4, 0), (0, 4), (4, 4)]
        .into_iter()
        .map(|(x, y)| BoundingBox::new(x, y, x + 4, y + 4).unwrap())
        .collect();
    assert_eq!(quarters, want);
}

#[test]
fn fast_mode_is_the_filtered_union_of_its_scales() {
    let img = Image::from_fn(72, 60, |x, y| {
        if (15..50).contains(&x) && (10..40).contains(&y) {
            [220, 40, 30]
        } else {
            [((x * 3) % 90 + 60) as u8, 120, ((y * 5) % 80 + 70) as u8]
        }
    });
    let mode = SearchMode::fast();
    let mut union: Vec<BoundingBox> = mode
        .scales
        .iter()
        .flat_map(|&s| boxes_at_scale(&img, &mode, s))
        .filter(|b| b.width() >= MIN_PROPOSAL_SIDE && b.height() >= MIN_PROPOSAL_SIDE)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    union.sort_by(proposal_order);
    assert_eq!(propose(&img, &mode, "x").boxes, union);
}

#[test]
fn nested_quality_scales_cover_fast() {
    let quality = SearchMode::new(ModeTag::Quality, vec![50.0, 100.0, 150.0, 200.0]).unwrap();
    for img in common::fixture_suite() {
        let img = Image::from_fn(img.width() * 2, img.height() * 2, |x, y| img.get(x / 2, y / 2));
        let fast = propose(&img, &SearchMode::fast(), "f").boxes;
        let q = propose(&img, &quality, "q").boxes;
        assert!(fast.iter().all(|b| q.contains(b)));
    }
}

#[test]
fn proposals_jsonl_round_trip() {
    let sets: Vec<_> = common::fixture_suite()
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let img = Image::from_fn(img.width() * 2, img.height() * 2, |x, y| img.get(x / 2, y / 2));
            propose(&img, &SearchMode::fast(), &format!("img{i}.png"))
        })
        .collect();
    let mut buf = Vec::new();
    write_proposals(&mut buf, &sets).unwrap();
    let back = read_proposals(&buf[..]).unwrap();
    let non_empty: Vec<_> = sets.into_iter().filter(|s| !s.boxes.is_empty()).collect();
    assert!(non_empty.len() >= 3);
    assert_eq!(back, non_empty);
}

#[test]
fn constant_image_yields_one_proposal() {
    let set = propose(&Image::filled(40, 30, [3, 3, 3]), &SearchMode::quality(), "c");
    assert_eq!(set.boxes, vec![BoundingBox::new(0, 0, 40, 30).unwrap()]);
}
