//! FlickrLogos-32 style corpus layout: loading, train/validation merging and a
//! synthetic fixture generator.
//!
//! Layout under the corpus root:
//!
//! ```text
//! classes.txt                 one class name per line
//! trainset.txt                <relative image path> [<class name>]
//! valset.txt                  same; a missing class or `no-logo` marks a no-logo image
//! testset.txt
//! <image path>.bboxes.txt     optional `x y width height` header, then one box per row
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{decode_image, encode_png, Image, ImageError};
use crate::metrics::BoundingBox;

pub const CLASSES_FILE: &str = "classes.txt";
pub const TRAIN_FILE: &str = "trainset.txt";
pub const VAL_FILE: &str = "valset.txt";
pub const TEST_FILE: &str = "testset.txt";
pub const BBOX_SUFFIX: &str = ".bboxes.txt";
pub const NO_LOGO: &str = "no-logo";
pub const STRICT_CLASS_COUNT: usize = 32;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("logo image {0} has no bounding-box file")]
    MissingAnnotation(String),
    #[error("image {image} listed in both {first} and {second}")]
    InconsistentPartition {
        image: String,
        first: &'static str,
        second: &'static str,
    },
    #[error("expected {expected} classes, found {found}")]
    BadClassCount { expected: usize, found: usize },
    #[error("duplicate class name {0}")]
    DuplicateClass(String),
    #[error("{file}:{line}: unknown class `{class}`")]
    UnknownClass {
        file: String,
        line: usize,
        class: String,
    },
    #[error("{file}:{line}: {message}")]
    Malformed {
        file: String,
        line: usize,
        message: String,
    },
    #[error("box {bbox} lies outside {image} ({width}x{height})")]
    BoxOutOfBounds {
        image: String,
        bbox: BoundingBox,
        width: usize,
        height: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: ImageError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Logo(usize),
    NoLogo,
}

impl Label {
    pub fn is_logo(&self) -> bool {
        matches!(self, Label::Logo(_))
    }

    pub fn class(&self) -> Option<usize> {
        match self {
            Label::Logo(c) => Some(*c),
            Label::NoLogo => None,
        }
    }
}

/// Ground truth for one image. `image_id` is the path relative to the corpus root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub image_id: String,
    pub label: Label,
    pub boxes: Vec<BoundingBox>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub fn list_file(&self) -> &'static str {
        match self {
            Partition::Train => TRAIN_FILE,
            Partition::Validation => VAL_FILE,
            Partition::Test => TEST_FILE,
        }
    }

    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Validation, Partition::Test];
}

impl std::str::FromStr for Partition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Partition::Train),
            "val" | "validation" => Ok(Partition::Validation),
            "test" => Ok(Partition::Test),
            other => Err(format!("unknown partition `{other}`")),
        }
    }
}

/// How strictly the class list is checked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LoadMode {
    /// Exactly 32 classes.
    #[default]
    Strict,
    /// Any non-empty class list.
    Fixture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub root: PathBuf,
    pub classes: Vec<String>,
    pub train: Vec<Annotation>,
    pub validation: Vec<Annotation>,
    pub test: Vec<Annotation>,
    pub merged_train: bool,
}

impl CorpusIndex {
    pub fn partition(&self, p: Partition) -> &[Annotation] {
        match p {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn image_path(&self, ann: &Annotation) -> PathBuf {
        self.root.join(&ann.image_id)
    }

    pub fn load_image(&self, ann: &Annotation) -> Result<Image, DatasetError> {
        read_image(&self.image_path(ann))
    }

    /// Decodes every image and checks its boxes against the image bounds.
    pub fn check_bounds(&self) -> Result<(), DatasetError> {
        for ann in self.train.iter().chain(&self.validation).chain(&self.test) {
            if ann.boxes.is_empty() {
                continue;
            }
            let img = self.load_image(ann)?;
            if let Some(b) = ann
                .boxes
                .iter()
                .find(|b| !b.fits_within(img.width(), img.height()))
            {
                return Err(DatasetError::BoxOutOfBounds {
                    image: ann.image_id.clone(),
                    bbox: *b,
                    width: img.width(),
                    height: img.height(),
                });
            }
        }
        Ok(())
    }

    pub fn logo_count(&self, p: Partition) -> usize {
        self.partition(p).iter().filter(|a| a.label.is_logo()).count()
    }

    pub fn no_logo_count(&self, p: Partition) -> usize {
        self.partition(p).len() - self.logo_count(p)
    }
}

pub fn read_image(path: &Path) -> Result<Image, DatasetError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_image(&bytes).map_err(|source| DatasetError::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().map(|l| l.trim().to_string()).collect())
}

/// Parses a `.bboxes.txt` file: an optional non-numeric header, then
/// `x y width height` rows.
pub fn parse_bbox_file(text: &str, file: &str) -> Result<Vec<BoundingBox>, DatasetError> {
    let mut boxes = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let numbers: Option<Vec<u32>> = fields.iter().map(|f| f.parse().ok()).collect();
        let malformed = |message: String| DatasetError::Malformed {
            file: file.to_string(),
            line: idx + 1,
            message,
        };
        match numbers {
            Some(v) if v.len() == 4 => {
                let b = BoundingBox::from_xywh(v[0], v[1], v[2], v[3])
                    .map_err(|e| malformed(e.to_string()))?;
                boxes.push(b);
            }
            None if boxes.is_empty() && idx == 0 => {} // header
            _ => return Err(malformed(format!("expected `x y width height`, got `{line}`"))),
        }
    }
    Ok(boxes)
}

fn load_partition(
    root: &Path,
    partition: Partition,
    classes: &[String],
) -> Result<Vec<Annotation>, DatasetError> {
    let list = root.join(partition.list_file());
    if !list.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (idx, line) in read_lines(&list)?.iter().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty());
        let path = fields.next().expect("non-empty line").to_string();
        let class = fields.next();
        if fields.next().is_some() {
            return Err(DatasetError::Malformed {
                file: partition.list_file().to_string(),
                line: idx + 1,
                message: "expected `<image path> [<class>]`".into(),
            });
        }
        let label = match class {
            None | Some(NO_LOGO) => Label::NoLogo,
            Some(name) => Label::Logo(classes.iter().position(|c| c == name).ok_or_else(
                || DatasetError::UnknownClass {
                    file: partition.list_file().to_string(),
                    line: idx + 1,
                    class: name.to_string(),
                },
            )?),
        };
        let boxes = match label {
            Label::NoLogo => Vec::new(),
            Label::Logo(_) => {
                let bbox_path = root.join(format!("{path}{BBOX_SUFFIX}"));
                if !bbox_path.exists() {
                    return Err(DatasetError::MissingAnnotation(path));
                }
                let text = fs::read_to_string(&bbox_path).map_err(io_err(&bbox_path))?;
                let boxes = parse_bbox_file(&text, &format!("{path}{BBOX_SUFFIX}"))?;
                if boxes.is_empty() {
                    return Err(DatasetError::MissingAnnotation(path));
                }
                boxes
            }
        };
        out.push(Annotation {
            image_id: path,
            label,
            boxes,
        });
    }
    Ok(out)
}

/// Indexes a corpus without decoding any image.
pub fn load_corpus(root: &Path, mode: LoadMode) -> Result<CorpusIndex, DatasetError> {
    let classes: Vec<String> = read_lines(&root.join(CLASSES_FILE))?
        .into_iter()
        .filter(|l| !l.is_empty())
        .collect();
    let mut seen = HashSet::new();
    for c in &classes {
        if !seen.insert(c.as_str()) {
            return Err(DatasetError::DuplicateClass(c.clone()));
        }
    }
    match mode {
        LoadMode::Strict if classes.len() != STRICT_CLASS_COUNT => {
            return Err(DatasetError::BadClassCount {
                expected: STRICT_CLASS_COUNT,
                found: classes.len(),
            })
        }
        LoadMode::Fixture if classes.is_empty() => {
            return Err(DatasetError::BadClassCount {
                expected: 1,
                found: 0,
            })
        }
        _ => {}
    }

    let train = load_partition(root, Partition::Train, &classes)?;
    let validation = load_partition(root, Partition::Validation, &classes)?;
    let test = load_partition(root, Partition::Test, &classes)?;

    let mut owner: BTreeMap<&str, &'static str> = BTreeMap::new();
    for (name, part) in [
        (TRAIN_FILE, &train),
        (VAL_FILE, &validation),
        (TEST_FILE, &test),
    ] {
        for ann in part {
            if let Some(first) = owner.insert(ann.image_id.as_str(), name) {
                return Err(DatasetError::InconsistentPartition {
                    image: ann.image_id.clone(),
                    first,
                    second: name,
                });
            }
        }
    }

    Ok(CorpusIndex {
        root: root.to_path_buf(),
        classes,
        train,
        validation,
        test,
        merged_train: false,
    })
}

/// Moves validation logo images into training; validation keeps only its
/// no-logo images. Idempotent.
pub fn merge_train_val(corpus: &CorpusIndex) -> CorpusIndex {
    if corpus.merged_train {
        return corpus.clone();
    }
    let mut out = corpus.clone();
    let (logos, no_logos): (Vec<_>, Vec<_>) = corpus
        .validation
        .iter()
        .cloned()
        .partition(|a| a.label.is_logo());
    out.train.extend(logos);
    out.validation = no_logos;
    out.merged_train = true;
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn bbox_file_contents(boxes: &[BoundingBox]) -> String {
    let mut s = String::from("x y width height\n");
    for b in boxes {
        s.push_str(&format!("{} {} {} {}\n", b.x0, b.y0, b.width(), b.height()));
    }
    s
}

fn list_line(ann: &Annotation, classes: &[String]) -> String {
    match ann.label {
        Label::Logo(c) => format!("{} {}\n", ann.image_id, classes[c]),
        Label::NoLogo => format!("{} {}\n", ann.image_id, NO_LOGO),
    }
}

/// Writes the list files, class file and box files for `corpus` under `root`.
/// Images are not touched.
pub fn write_layout(root: &Path, corpus: &CorpusIndex) -> Result<(), DatasetError> {
    write_file(
        &root.join(CLASSES_FILE),
        corpus
            .classes
            .iter()
            .map(|c| format!("{c}\n"))
            .collect::<String>()
            .as_bytes(),
    )?;
    for p in Partition::ALL {
        let part = corpus.partition(p);
        let list: String = part.iter().map(|a| list_line(a, &corpus.classes)).collect();
        write_file(&root.join(p.list_file()), list.as_bytes())?;
        for ann in part.iter().filter(|a| a.label.is_logo()) {
            write_file(
                &root.join(format!("{}{BBOX_SUFFIX}", ann.image_id)),
                bbox_file_contents(&ann.boxes).as_bytes(),
            )?;
        }
    }
    Ok(())
}

/// Synthetic corpus description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub classes: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub test_per_class: usize,
    pub val_no_logo: usize,
    pub test_no_logo: usize,
    pub width: usize,
    pub height: usize,
    /// Inclusive logo side range in pixels.
    pub logo_side: (usize, usize),
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            classes: 2,
            train_per_class: 3,
            val_per_class: 0,
            test_per_class: 0,
            val_no_logo: 0,
            test_no_logo: 0,
            width: 64,
            height: 64,
            logo_side: (24, 32),
            seed: 0,
        }
    }
}

/// Saturated, well separated logo colour for class `c` of `n`.
pub fn fixture_color(c: usize, n: usize) -> [u8; 3] {
    let hue = 360.0 * c as f64 / n.max(1) as f64;
    let sector = (hue / 60.0).floor() as usize % 6;
    let f = hue / 60.0 - (hue / 60.0).floor();
    let (hi, lo) = (230.0, 20.0);
    let up = lo + (hi - lo) * f;
    let down = hi - (hi - lo) * f;
    let (r, g, b) = match sector {
        0 => (hi, up, lo),
        1 => (down, hi, lo),
        2 => (lo, hi, up),
        3 => (lo, down, hi),
        4 => (up, lo, hi),
        _ => (hi, lo, down),
    };
    [r as u8, g as u8, b as u8]
}

/// Low-saturation textured noise with a random base grey.
fn fixture_background(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Image {
    let base: i32 = rng.gen_range(90..=160);
    let cell = 8usize;
    let gw = width.div_ceil(cell) + 1;
    let gh = height.div_ceil(cell) + 1;
    let coarse: Vec<i32> = (0..gw * gh).map(|_| rng.gen_range(-20..=20)).collect();
    let mut img = Image::filled(width, height, [0; 3]);
    for y in 0..height {
        for x in 0..width {
            let (cx, cy) = (x / cell, y / cell);
            let (fx, fy) = ((x % cell) as f64 / cell as f64, (y % cell) as f64 / cell as f64);
            let at = |i: usize, j: usize| f64::from(coarse[j * gw + i]);
            let smooth = at(cx, cy) * (1.0 - fx) * (1.0 - fy)
                + at(cx + 1, cy) * fx * (1.0 - fy)
                + at(cx, cy + 1) * (1.0 - fx) * fy
                + at(cx + 1, cy + 1) * fx * fy;
            let v = base + smooth as i32;
            let px = std::array::from_fn(|_| (v + rng.gen_range(-12..=12)).clamp(0, 255) as u8);
            img.put(x, y, px);
        }
    }
    img
}

fn paint_logo(img: &mut Image, bbox: &BoundingBox, color: [u8; 3]) {
    for y in bbox.y0..bbox.y1 {
        for x in bbox.x0..bbox.x1 {
            img.put(x as usize, y as usize, color);
        }
    }
}

/// Renders one fixture image; returns the image and its logo box (if any).
pub fn fixture_image(
    spec: &FixtureSpec,
    class: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> (Image, Option<BoundingBox>) {
    let mut img = fixture_background(rng, spec.width, spec.height);
    let bbox = class.map(|c| {
        let (lo, hi) = spec.logo_side;
        let bw = rng.gen_range(lo..=hi).min(spec.width);
        let bh = rng.gen_range(lo..=hi).min(spec.height);
        let x0 = rng.gen_range(0..=spec.width - bw);
        let y0 = rng.gen_range(0..=spec.height - bh);
        let b = BoundingBox::from_xywh(x0 as u32, y0 as u32, bw as u32, bh as u32)
            .expect("positive logo side");
        paint_logo(&mut img, &b, fixture_color(c, spec.classes));
        b
    });
    (img, bbox)
}

/// Writes a deterministic synthetic corpus in the standard layout and returns
/// its index (fixture mode).
pub fn generate_fixture(spec: &FixtureSpec, out: &Path) -> Result<CorpusIndex, DatasetError> {
    assert!(spec.classes >= 1, "fixture needs at least one class");
    assert!(spec.logo_side.0 >= 1 && spec.logo_side.0 <= spec.logo_side.1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes: Vec<String> = (0..spec.classes).map(|c| format!("class{c:02}")).collect();
    let mut corpus = CorpusIndex {
        root: out.to_path_buf(),
        classes: classes.clone(),
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        merged_train: false,
    };
    let plan = [
        (Partition::Train, spec.train_per_class, 0usize),
        (Partition::Validation, spec.val_per_class, spec.val_no_logo),
        (Partition::Test, spec.test_per_class, spec.test_no_logo),
    ];
    for (partition, per_class, no_logo) in plan {
        let tag = match partition {
            Partition::Train => "train",
            Partition::Validation => "val",
            Partition::Test => "test",
        };
        let mut anns = Vec::new();
        for (c, name) in classes.iter().enumerate() {
            for i in 0..per_class {
                let (img, bbox) = fixture_image(spec, Some(c), &mut rng);
                let id = format!("{name}/{tag}_{i:04}.png");
                write_image_file(&out.join(&id), &img)?;
                anns.push(Annotation {
                    image_id: id,
                    label: Label::Logo(c),
                    boxes: bbox.into_iter().collect(),
                });
            }
        }
        for i in 0..no_logo {
            let (img, _) = fixture_image(spec, None, &mut rng);
            let id = format!("{NO_LOGO}/{tag}_{i:04}.png");
            write_image_file(&out.join(&id), &img)?;
            anns.push(Annotation {
                image_id: id,
                label: Label::NoLogo,
                boxes: Vec::new(),
            });
        }
        match partition {
            Partition::Train => corpus.train = anns,
            Partition::Validation => corpus.validation = anns,
            Partition::Test => corpus.test = anns,
        }
    }
    write_layout(out, &corpus)?;
    Ok(corpus)
}

/// Writes PNG for `.png` paths and PPM otherwise.
pub fn write_image_file(path: &Path, img: &Image) -> Result<(), DatasetError> {
    let bytes = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        encode_png(img).map_err(|source| DatasetError::Image {
            path: path.to_path_buf(),
            source,
        })?
    } else {
        crate::imagecore::encode_ppm(img)
    };
    write_file(path, &bytes)
}
