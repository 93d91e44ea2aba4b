//! Training-set augmentation: horizontal flip, horizontal shear and a global
//! per-channel colour shift, with matching box updates.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    write_image_file, write_layout, Annotation, CorpusIndex, DatasetError, Partition,
};
use crate::imagecore::Image;
use crate::metrics::BoundingBox;

pub const VARIANT_SUFFIX: &str = "_aug0";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub flip: bool,
    /// Shear angles are drawn uniformly from `[-max, max]` degrees; 0 disables.
    pub shear_max_degrees: f64,
    /// Channel deltas are drawn from `[-f * 255, f * 255]`; 0 disables.
    pub color_shift_fraction: f64,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            flip: true,
            shear_max_degrees: 5.0,
            color_shift_fraction: 0.03,
            seed: 0,
        }
    }
}

impl AugmentSpec {
    pub fn flip_only(seed: u64) -> Self {
        Self {
            flip: true,
            shear_max_degrees: 0.0,
            color_shift_fraction: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=5.0).contains(&self.shear_max_degrees) {
            return Err(format!(
                "shear range {} outside [0, 5] degrees",
                self.shear_max_degrees
            ));
        }
        if !(0.0..=1.0).contains(&self.color_shift_fraction) {
            return Err(format!(
                "colour shift fraction {} outside [0, 1]",
                self.color_shift_fraction
            ));
        }
        Ok(())
    }
}

/// Mirrors columns; box `(x0, x1)` becomes `(w - x1, w - x0)`.
pub fn hflip(img: &Image, boxes: &[BoundingBox]) -> (Image, Vec<BoundingBox>) {
    let w = img.width();
    let flipped = Image::from_fn(w, img.height(), |x, y| img.get(w - 1 - x, y));
    let wb = w as u32;
    let boxes = boxes
        .iter()
        .map(|b| BoundingBox {
            x0: wb - b.x1,
            x1: wb - b.x0,
            ..*b
        })
        .collect();
    (flipped, boxes)
}

/// Geometry of a horizontal shear `x' = x + tan(theta) * y + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShearMap {
    pub tan: f64,
    pub offset: f64,
    pub out_width: usize,
}

impl ShearMap {
    pub fn new(width: usize, height: usize, degrees: f64) -> Self {
        assert!(degrees.abs() <= 45.0, "shear angle must be within 45 degrees");
        let tan = degrees.to_radians().tan();
        let extra = (tan.abs() * height as f64).ceil() as usize;
        let offset = if tan < 0.0 { extra as f64 } else { 0.0 };
        Self {
            tan,
            offset,
            out_width: width + extra,
        }
    }

    #[inline]
    pub fn forward(&self, x: f64, y: f64) -> f64 {
        x + self.tan * y + self.offset
    }

    /// Nearest source column for output column `x` on row `y` (may fall outside).
    #[inline]
    pub fn source_column(&self, x: usize, y: usize) -> i64 {
        (x as f64 - self.tan * y as f64 - self.offset + 0.5).floor() as i64
    }
}

/// Horizontal shear with nearest-neighbour sampling. The canvas grows by
/// `ceil(|tan| * height)` columns and uncovered pixels replicate the nearest
/// edge column. Boxes become the tight bounds of their sheared corners.
pub fn shear(img: &Image, boxes: &[BoundingBox], degrees: f64) -> (Image, Vec<BoundingBox>) {
    if degrees == 0.0 {
        return (img.clone(), boxes.to_vec());
    }
    let map = ShearMap::new(img.width(), img.height(), degrees);
    let max_x = img.width() as i64 - 1;
    let out = Image::from_fn(map.out_width, img.height(), |x, y| {
        let sx = map.source_column(x, y).clamp(0, max_x);
        img.get(sx as usize, y)
    });
    let canvas = map.out_width as f64;
    let boxes = boxes
        .iter()
        .map(|b| {
            let xs = [
                map.forward(f64::from(b.x0), f64::from(b.y0)),
                map.forward(f64::from(b.x1), f64::from(b.y0)),
                map.forward(f64::from(b.x0), f64::from(b.y1)),
                map.forward(f64::from(b.x1), f64::from(b.y1)),
            ];
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let x0 = lo.floor().clamp(0.0, canvas - 1.0) as u32;
            let x1 = (hi.ceil().clamp(1.0, canvas) as u32).max(x0 + 1);
            BoundingBox { x0, x1, ..*b }
        })
        .collect();
    (out, boxes)
}

/// Integer per-channel colour offsets.
pub type ChannelDeltas = [i16; 3];

/// One delta per channel, uniform over `[-floor(f * 255), floor(f * 255)]`.
pub fn sample_color_deltas<R: Rng>(fraction: f64, rng: &mut R) -> ChannelDeltas {
    let span = (fraction * 255.0).floor() as i16;
    if span == 0 {
        return [0; 3];
    }
    std::array::from_fn(|_| rng.gen_range(-span..=span))
}

/// Adds fixed offsets with saturation.
pub fn apply_color_deltas(img: &Image, deltas: ChannelDeltas) -> Image {
    Image::from_fn(img.width(), img.height(), |x, y| {
        let p = img.get(x, y);
        std::array::from_fn(|c| (i16::from(p[c]) + deltas[c]).clamp(0, 255) as u8)
    })
}

/// Seeded global colour shift.
pub fn color_shift(img: &Image, fraction: f64, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    apply_color_deltas(img, sample_color_deltas(fraction, &mut rng))
}

/// Produces the augmented variant of one image; the RNG stream drives shear
/// angle then colour deltas.
pub fn augment_image(
    img: &Image,
    boxes: &[BoundingBox],
    spec: &AugmentSpec,
    rng: &mut ChaCha8Rng,
) -> (Image, Vec<BoundingBox>) {
    let (mut img, mut boxes) = if spec.flip {
        hflip(img, boxes)
    } else {
        (img.clone(), boxes.to_vec())
    };
    if spec.shear_max_degrees > 0.0 {
        let m = spec.shear_max_degrees;
        let degrees = rng.gen_range(-m..=m);
        (img, boxes) = shear(&img, &boxes, degrees);
    }
    if spec.color_shift_fraction > 0.0 {
        img = apply_color_deltas(&img, sample_color_deltas(spec.color_shift_fraction, rng));
    }
    (img, boxes)
}

pub fn variant_id(image_id: &str) -> String {
    let path = Path::new(image_id);
    match (path.file_stem(), path.extension()) {
        (Some(stem), Some(ext)) => {
            let name = format!(
                "{}{VARIANT_SUFFIX}.{}",
                stem.to_string_lossy(),
                ext.to_string_lossy()
            );
            path.with_file_name(name).to_string_lossy().into_owned()
        }
        _ => format!("{image_id}{VARIANT_SUFFIX}"),
    }
}

fn copy_image(from: &Path, to: &Path) -> Result<(), DatasetError> {
    if let Some(parent) = to.parent() {
        fs::create_dir_all(parent).map_err(|source| DatasetError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::copy(from, to).map(|_| ()).map_err(|source| DatasetError::Io {
        path: from.to_path_buf(),
        source,
    })
}

/// Copies the corpus to `out` and adds one augmented variant per training
/// image; image `i` uses the RNG stream seeded with `seed + i`.
pub fn augment_corpus(
    corpus: &CorpusIndex,
    spec: &AugmentSpec,
    out: &Path,
) -> Result<CorpusIndex, DatasetError> {
    for p in Partition::ALL {
        for ann in corpus.partition(p) {
            copy_image(&corpus.image_path(ann), &out.join(&ann.image_id))?;
        }
    }

    let work = |(i, ann): (usize, &Annotation)| -> Result<Annotation, DatasetError> {
        let img = corpus.load_image(ann)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(i as u64));
        let (variant, boxes) = augment_image(&img, &ann.boxes, spec, &mut rng);
        let id = variant_id(&ann.image_id);
        write_image_file(&out.join(&id), &variant)?;
        Ok(Annotation {
            image_id: id,
            label: ann.label,
            boxes,
        })
    };
    #[cfg(feature = "parallel")]
    let variants: Vec<Annotation> = {
        use rayon::prelude::*;
        corpus
            .train
            .par_iter()
            .enumerate()
            .map(work)
            .collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let variants: Vec<Annotation> = corpus
        .train
        .iter()
        .enumerate()
        .map(work)
        .collect::<Result<_, _>>()?;

    let mut augmented = corpus.clone();
    augmented.root = out.to_path_buf();
    augmented.train.extend(variants);
    write_layout(out, &augmented)?;
    Ok(augmented)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x0: u32, y0: u32, x1: u32, y1: u32) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn flip_row() {
        let img = Image::from_fn(4, 1, |x, _| [x as u8 * 10, 0, 0]);
        let (out, boxes) = hflip(&img, &[bb(0, 0, 2, 1)]);
        let row: Vec<u8> = out.pixels().iter().map(|p| p[0]).collect();
        assert_eq!(row, vec![30, 20, 10, 0]);
        assert_eq!(boxes, vec![bb(2, 0, 4, 1)]);
    }

    #[test]
    fn flip_symmetric_image() {
        let img = Image::from_fn(5, 3, |x, y| [(x.min(4 - x) * 50) as u8, y as u8, 0]);
        let (out, boxes) = hflip(&img, &[bb(0, 0, 1, 3)]);
        assert_eq!(out, img);
        assert_eq!(boxes, vec![bb(4, 0, 5, 3)]);
    }

    #[test]
    fn zero_shear_is_identity() {
        let img = Image::from_fn(6, 4, |x, y| [x as u8, y as u8, 1]);
        let b = vec![bb(1, 1, 3, 4)];
        assert_eq!(shear(&img, &b, 0.0), (img, b));
    }

    #[test]
    fn shear_top_row_unchanged() {
        let img = Image::from_fn(10, 10, |x, y| [x as u8 * 20, y as u8 * 20, 0]);
        let (out, boxes) = shear(&img, &[bb(0, 0, 1, 1)], 5.0);
        // the pixel's lower corners move by tan(5 deg), its top edge stays put
        assert_eq!(boxes, vec![bb(0, 0, 2, 1)]);
        for x in 0..10 {
            assert_eq!(out.get(x, 0), img.get(x, 0));
        }
    }

    #[test]
    fn shear_box_four_corner_oracle() {
        // tan(5 deg) = 0.087489; corners x = 2 + 0.0875 * {2, 5}, 5 + 0.0875 * {2, 5}
        // -> min 2.175, max 5.437 -> [2, 6)
        let img = Image::filled(10, 10, [9; 3]);
        let (out, boxes) = shear(&img, &[bb(2, 2, 5, 5)], 5.0);
        assert_eq!(out.width(), 11);
        assert_eq!(boxes, vec![bb(2, 2, 6, 5)]);
        // negative angle shifts everything right by the canvas extension
        let (out, boxes) = shear(&img, &[bb(2, 2, 5, 5)], -5.0);
        assert_eq!(out.width(), 11);
        // 1 + 2 - {0.175, 0.437}, 1 + 5 - {0.175, 0.437} -> [2.56, 5.82] -> [2, 6)
        assert_eq!(boxes, vec![bb(2, 2, 6, 5)]);
    }

    #[test]
    fn color_shift_examples() {
        let img = Image::filled(3, 2, [128; 3]);
        assert_eq!(color_shift(&img, 0.0, 11), img);
        assert_eq!(
            apply_color_deltas(&img, [7, -7, 0]),
            Image::filled(3, 2, [135, 121, 128])
        );
        let white = Image::filled(2, 2, [255; 3]);
        assert_eq!(apply_color_deltas(&white, [5, 1, 7]), white);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = sample_color_deltas(0.03, &mut rng);
        assert!(d.iter().all(|v| v.abs() <= 7));
        let shifted = color_shift(&img, 0.03, 3);
        let expect: [u8; 3] = std::array::from_fn(|c| (128 + d[c]) as u8);
        assert_eq!(shifted, Image::filled(3, 2, expect));
    }

    #[test]
    fn variant_ids() {
        assert_eq!(variant_id("class00/train_0001.png"), "class00/train_0001_aug0.png");
        assert_eq!(variant_id("noext"), "noext_aug0");
    }

    #[test]
    fn spec_validation() {
        assert!(AugmentSpec::default().validate().is_ok());
        let bad = AugmentSpec {
            shear_max_degrees: 8.0,
            ..AugmentSpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
