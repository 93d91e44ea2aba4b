mod common;

use std::fs;
use std::path::Path;

use proptest::prelude::*;

use logodet_core::augment::{
    augment_corpus, hflip, shear, variant_id, AugmentSpec, ShearMap, VARIANT_SUFFIX,
};
use logodet_core::dataset::{
    generate_fixture, load_corpus, merge_train_val, DatasetError, FixtureSpec, Label, LoadMode,
    Partition, CLASSES_FILE, TRAIN_FILE,
};
use logodet_core::metrics::BoundingBox;
use logodet_core::Image;

fn small_spec(seed: u64) -> FixtureSpec {
    FixtureSpec {
        classes: 2,
        train_per_class: 3,
        val_per_class: 1,
        test_per_class: 2,
        val_no_logo: 2,
        test_no_logo: 2,
        seed,
        ..FixtureSpec::default()
    }
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn fixture_round_trips_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    let written = generate_fixture(&small_spec(3), dir.path()).unwrap();
    let loaded = load_corpus(dir.path(), LoadMode::Fixture).unwrap();
    assert_eq!(loaded, written);
    assert_eq!(loaded.logo_count(Partition::Train), 6);
    assert_eq!(loaded.no_logo_count(Partition::Validation), 2);
    loaded.check_bounds().unwrap();
    for ann in loaded.partition(Partition::Test) {
        let img = loaded.load_image(ann).unwrap();
        assert_eq!((img.width(), img.height()), (64, 64));
        assert_eq!(ann.label.is_logo(), !ann.boxes.is_empty());
    }
}

#[test]
fn strict_mode_rejects_a_small_class_list() {
    let dir = tempfile::tempdir().unwrap();
    generate_fixture(&small_spec(3), dir.path()).unwrap();
    let err = load_corpus(dir.path(), LoadMode::Strict).unwrap_err();
    assert!(matches!(err, DatasetError::BadClassCount { expected: 32, found: 2 }));
}

#[test]
fn fixture_regeneration_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_fixture(&small_spec(9), a.path()).unwrap();
    generate_fixture(&small_spec(9), b.path()).unwrap();
    assert_eq!(tree_bytes(a.path()), tree_bytes(b.path()));

    let c = tempfile::tempdir().unwrap();
    generate_fixture(&small_spec(10), c.path()).unwrap();
    assert_ne!(tree_bytes(a.path()), tree_bytes(c.path()));
}

#[test]
fn missing_annotation_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_fixture(&small_spec(1), dir.path()).unwrap();
    let victim = format!("{}.bboxes.txt", corpus.train[0].image_id);
    fs::remove_file(dir.path().join(victim)).unwrap();
    let err = load_corpus(dir.path(), LoadMode::Fixture).unwrap_err();
    assert!(matches!(err, DatasetError::MissingAnnotation { .. }), "{err:?}");
}

#[test]
fn image_in_two_partitions_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_fixture(&small_spec(1), dir.path()).unwrap();
    let test_list = dir.path().join("testset.txt");
    let mut text = fs::read_to_string(&test_list).unwrap();
    text.push_str(&format!("{},{}\n", corpus.train[0].image_id, corpus.classes[0]));
    fs::write(&test_list, text).unwrap();
    let err = load_corpus(dir.path(), LoadMode::Fixture).unwrap_err();
    assert!(matches!(err, DatasetError::InconsistentPartition { .. }), "{err:?}");
}

#[test]
fn unknown_class_in_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    generate_fixture(&small_spec(1), dir.path()).unwrap();
    let classes = dir.path().join(CLASSES_FILE);
    fs::write(&classes, "class00\nother\n").unwrap();
    assert!(load_corpus(dir.path(), LoadMode::Fixture).is_err());
    assert!(dir.path().join(TRAIN_FILE).exists());
}

#[test]
fn merge_moves_validation_into_train() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_fixture(&small_spec(4), dir.path()).unwrap();
    let merged = merge_train_val(&corpus);
    let val_logos = corpus.logo_count(Partition::Validation);
    assert_eq!(merged.train.len(), corpus.train.len() + val_logos);
    assert_eq!(merged.logo_count(Partition::Validation), 0);
    assert_eq!(merged.no_logo_count(Partition::Validation), corpus.no_logo_count(Partition::Validation));
    assert_eq!(merged.test, corpus.test);
    assert_eq!(merge_train_val(&merged), merged);
}

#[test]
fn augmentation_doubles_the_training_partition() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let corpus = generate_fixture(&small_spec(5), src.path()).unwrap();
    let augmented = augment_corpus(&corpus, &AugmentSpec::default(), out.path()).unwrap();
    assert_eq!(corpus.train.len(), 6);
    assert_eq!(augmented.train.len(), 12);
    assert_eq!(augmented.test, corpus.test);

    let reloaded = load_corpus(out.path(), LoadMode::Fixture).unwrap();
    assert_eq!(reloaded.train, augmented.train);
    reloaded.check_bounds().unwrap();
    for ann in &corpus.train {
        let v = reloaded.train.iter().find(|a| a.image_id == variant_id(&ann.image_id)).unwrap();
        assert!(v.image_id.contains(VARIANT_SUFFIX));
        assert_eq!(v.label, ann.label);
        assert_eq!(v.boxes.len(), ann.boxes.len());
    }
}

#[test]
fn flip_only_variants_are_exact_mirrors() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let corpus = generate_fixture(&small_spec(6), src.path()).unwrap();
    let augmented = augment_corpus(&corpus, &AugmentSpec::flip_only(0), out.path()).unwrap();
    for ann in &corpus.train {
        let original = corpus.load_image(ann).unwrap();
        let v = augmented.train.iter().find(|a| a.image_id == variant_id(&ann.image_id)).unwrap();
        let flipped = augmented.load_image(v).unwrap();
        let w = original.width();
        for y in 0..original.height() {
            for x in 0..w {
                assert_eq!(flipped.get(x, y), original.get(w - 1 - x, y));
            }
        }
        for (a, b) in ann.boxes.iter().zip(&v.boxes) {
            assert_eq!((b.x0, b.x1, b.y0, b.y1), (w as u32 - a.x1, w as u32 - a.x0, a.y0, a.y1));
        }
        if let Label::Logo(_) = ann.label {
            assert_eq!(v.boxes.len(), 1);
        }
    }
}

fn patch_image() -> impl Strategy<Value = (Image, BoundingBox)> {
    (12usize..40, 12usize..40, 0.0f64..1.0, 0.0f64..1.0, 2usize..8, 2usize..8).prop_map(
        |(w, h, fx, fy, bw, bh)| {
            let x0 = ((w - bw) as f64 * fx) as usize;
            let y0 = ((h - bh) as f64 * fy) as usize;
            let b = BoundingBox::from_xywh(x0 as u32, y0 as u32, bw as u32, bh as u32).unwrap();
            let img = Image::from_fn(w, h, |x, y| {
                if b.contains(&BoundingBox::from_xywh(x as u32, y as u32, 1, 1).unwrap()) {
                    [255, 0, 0]
                } else {
                    [0, 0, 255]
                }
            });
            (img, b)
        },
    )
}

proptest! {
    #[test]
    fn sheared_box_covers_every_logo_pixel((img, b) in patch_image(), degrees in -5.0f64..=5.0) {
        let (out, boxes) = shear(&img, &[b], degrees);
        prop_assert_eq!(boxes.len(), 1);
        let nb = boxes[0];
        prop_assert!(nb.fits_within(out.width(), out.height()));
        let map = ShearMap::new(img.width(), img.height(), degrees);
        for y in 0..out.height() {
            for x in 0..out.width() {
                // edge-replicated fill columns are not logo content
                let sx = map.source_column(x, y);
                if sx < 0 || sx >= img.width() as i64 {
                    continue;
                }
                if out.get(x, y) == [255, 0, 0] {
                    let px = BoundingBox::from_xywh(x as u32, y as u32, 1, 1).unwrap();
                    prop_assert!(nb.contains(&px), "pixel ({}, {}) outside {:?}", x, y, nb);
                }
            }
        }
    }

    #[test]
    fn double_flip_is_identity((img, b) in patch_image()) {
        let (once, boxes) = hflip(&img, &[b]);
        let (twice, back) = hflip(&once, &boxes);
        prop_assert_eq!(twice, img);
        prop_assert_eq!(back, vec![b]);
    }
}
