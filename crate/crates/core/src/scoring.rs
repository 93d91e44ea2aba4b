//! Region scoring: the scorer contract, a colour-histogram baseline and the
//! JSON Lines score-file format shared with external scorers.
//!
//! Every scored region carries 33 probabilities: one per logo class followed
//! by the background class.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CorpusIndex, DatasetError, Label};
use crate::imagecore::Image;
use crate::metrics::{iou, BoundingBox, NUM_CLASSES};
use crate::selective_search::{color_histogram, ProposalSet, COLOR_HIST_LEN};

/// Index of the background entry in a score vector.
pub const BACKGROUND: usize = NUM_CLASSES;
/// Score vector width.
pub const SCORE_LEN: usize = NUM_CLASSES + 1;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("score file line {line}: {message}")]
    MalformedScoreFile { line: usize, message: String },
    #[error("score file line {line}: scores sum to {sum}")]
    ScoreSumOutOfRange { line: usize, sum: f64 },
    #[error("score file line {line}: expected {SCORE_LEN} scores, got {got}")]
    UnknownClassCount { line: usize, got: usize },
    #[error("class {0} has no training boxes")]
    EmptyClass(String),
    #[error("scorer needs the decoded image for {0}")]
    MissingImage(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A box with its class distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredRegion {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub scores: Vec<f64>,
}

impl ScoredRegion {
    /// Best non-background class.
    pub fn best_class(&self) -> (usize, f64) {
        self.scores[..NUM_CLASSES]
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (c, &s)| {
                if s > best.1 {
                    (c, s)
                } else {
                    best
                }
            })
    }

    /// Argmax over all 33 entries is the background class.
    pub fn is_background(&self) -> bool {
        self.best_class().1 < self.scores[BACKGROUND]
    }
}

/// Anything that turns proposals into scored regions.
pub trait RegionScorer: Sync {
    fn id(&self) -> String;

    /// Whether [`RegionScorer::score`] reads pixels and proposals. Score files
    /// carry their own boxes and do not.
    fn needs_image(&self) -> bool {
        true
    }

    fn score(
        &self,
        image_id: &str,
        image: Option<&Image>,
        proposals: &ProposalSet,
    ) -> Result<Vec<ScoredRegion>, ScoringError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub temperature: f64,
    pub background_per_image: usize,
    /// Background crops must overlap every ground-truth box below this IoU.
    pub background_max_iou: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            temperature: 0.05,
            background_per_image: 4,
            background_max_iou: 0.3,
            seed: 0,
        }
    }
}

/// Nearest-reference colour-histogram classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    /// `(class, histogram)`; class [`BACKGROUND`] marks background references.
    pub references: Vec<(usize, Vec<f64>)>,
    pub temperature: f64,
    pub class_names: Vec<String>,
}

/// Random crop with IoU below `max_iou` against every box, if one is found.
fn sample_background_box<R: Rng>(
    rng: &mut R,
    width: usize,
    height: usize,
    gts: &[BoundingBox],
    max_iou: f64,
) -> Option<BoundingBox> {
    let max_side = width.min(height);
    let min_side = 20.min(max_side).max(1);
    for _ in 0..100 {
        let w = rng.gen_range(min_side..=max_side);
        let h = rng.gen_range(min_side..=max_side);
        let x0 = rng.gen_range(0..=width - w);
        let y0 = rng.gen_range(0..=height - h);
        let b = BoundingBox::from_xywh(x0 as u32, y0 as u32, w as u32, h as u32).ok()?;
        if gts.iter().all(|g| iou(&b, g) < max_iou) {
            return Some(b);
        }
    }
    None
}

/// Builds the baseline from the corpus training partition.
pub fn train_baseline(
    corpus: &CorpusIndex,
    config: &BaselineConfig,
) -> Result<BaselineModel, ScoringError> {
    let mut references = Vec::new();
    let mut per_class = vec![0usize; corpus.num_classes()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for ann in &corpus.train {
        let img = corpus.load_image(ann)?;
        if let Label::Logo(class) = ann.label {
            for b in &ann.boxes {
                if let Some(crop) = img.crop(b.x0 as usize, b.y0 as usize, b.x1 as usize, b.y1 as usize) {
                    references.push((class, color_histogram(&crop)));
                    per_class[class] += 1;
                }
            }
        }
        for _ in 0..config.background_per_image {
            if let Some(b) = sample_background_box(
                &mut rng,
                img.width(),
                img.height(),
                &ann.boxes,
                config.background_max_iou,
            ) {
                let crop = img
                    .crop(b.x0 as usize, b.y0 as usize, b.x1 as usize, b.y1 as usize)
                    .expect("sampled inside image");
                references.push((BACKGROUND, color_histogram(&crop)));
            }
        }
    }
    if let Some(empty) = per_class.iter().position(|&n| n == 0) {
        return Err(ScoringError::EmptyClass(corpus.classes[empty].clone()));
    }
    Ok(BaselineModel {
        references,
        temperature: config.temperature,
        class_names: corpus.classes.clone(),
    })
}

fn histogram_intersection(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.min(*y)).sum()
}

impl BaselineModel {
    /// Per-class best intersection; `None` for classes without references.
    pub fn similarities(&self, hist: &[f64]) -> [Option<f64>; SCORE_LEN] {
        debug_assert_eq!(hist.len(), COLOR_HIST_LEN);
        let mut best = [None; SCORE_LEN];
        for (class, reference) in &self.references {
            let s = histogram_intersection(hist, reference);
            let slot: &mut Option<f64> = &mut best[*class];
            if slot.is_none_or(|b| s > b) {
                *slot = Some(s);
            }
        }
        best
    }

    /// Softmax of similarities over the classes that have references.
    pub fn score_histogram(&self, hist: &[f64]) -> Vec<f64> {
        let sims = self.similarities(hist);
        let max = sims.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = sims
            .iter()
            .map(|s| s.map_or(0.0, |s| ((s - max) / self.temperature).exp()))
            .collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    pub fn score_regions(&self, img: &Image, proposals: &ProposalSet) -> Vec<ScoredRegion> {
        proposals
            .boxes
            .iter()
            .map(|b| {
                let crop = img
                    .crop(b.x0 as usize, b.y0 as usize, b.x1 as usize, b.y1 as usize)
                    .unwrap_or_else(|| Image::filled(1, 1, [0; 3]));
                ScoredRegion {
                    bbox: *b,
                    scores: self.score_histogram(&color_histogram(&crop)),
                }
            })
            .collect()
    }
}

impl RegionScorer for BaselineModel {
    fn id(&self) -> String {
        format!("baseline-color-hist(t={})", self.temperature)
    }

    fn score(
        &self,
        image_id: &str,
        image: Option<&Image>,
        proposals: &ProposalSet,
    ) -> Result<Vec<ScoredRegion>, ScoringError> {
        let img = image.ok_or_else(|| ScoringError::MissingImage(image_id.to_string()))?;
        Ok(self.score_regions(img, proposals))
    }
}

/// Scored regions keyed by image id, as read from or written to a score file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreFile {
    pub source: String,
    pub regions: BTreeMap<String, Vec<ScoredRegion>>,
}

impl ScoreFile {
    pub fn len(&self) -> usize {
        self.regions.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl RegionScorer for ScoreFile {
    fn id(&self) -> String {
        format!("score-file({})", self.source)
    }

    fn needs_image(&self) -> bool {
        false
    }

    fn score(
        &self,
        image_id: &str,
        _image: Option<&Image>,
        _proposals: &ProposalSet,
    ) -> Result<Vec<ScoredRegion>, ScoringError> {
        Ok(self.regions.get(image_id).cloned().unwrap_or_default())
    }
}

#[derive(Serialize, Deserialize)]
struct ScoreLine {
    image_id: String,
    #[serde(rename = "box")]
    bbox: [u32; 4],
    scores: Vec<f64>,
}

/// Sums this close to 1 are rounding noise and left alone, so re-reading a
/// written file reproduces it exactly.
const RENORMALIZE_TOLERANCE: f64 = 1e-9;

/// Ensures a sum within `[0.99, 1.01]` and renormalises to 1.
pub fn validate_scores(line: usize, mut scores: Vec<f64>) -> Result<Vec<f64>, ScoringError> {
    if scores.len() != SCORE_LEN {
        return Err(ScoringError::UnknownClassCount {
            line,
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(ScoringError::MalformedScoreFile {
            line,
            message: "scores must be finite and non-negative".into(),
        });
    }
    let sum: f64 = scores.iter().sum();
    if !(0.99..=1.01).contains(&sum) {
        return Err(ScoringError::ScoreSumOutOfRange { line, sum });
    }
    if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
        scores.iter_mut().for_each(|s| *s /= sum);
    }
    Ok(scores)
}

pub fn read_scores<R: BufRead>(input: R, source: &str) -> Result<ScoreFile, ScoringError> {
    let mut file = ScoreFile {
        source: source.to_string(),
        regions: BTreeMap::new(),
    };
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let number = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ScoreLine =
            serde_json::from_str(&line).map_err(|e| ScoringError::MalformedScoreFile {
                line: number,
                message: e.to_string(),
            })?;
        let bbox = BoundingBox::try_from(parsed.bbox).map_err(|e| {
            ScoringError::MalformedScoreFile {
                line: number,
                message: e.to_string(),
            }
        })?;
        let scores = validate_scores(number, parsed.scores)?;
        file.regions
            .entry(parsed.image_id)
            .or_default()
            .push(ScoredRegion { bbox, scores });
    }
    Ok(file)
}

/// One line per region, images in key order, regions in list order.
pub fn write_scores<'a, W, I>(mut out: W, entries: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a [ScoredRegion])>,
{
    for (image_id, regions) in entries {
        for r in regions {
            let line = ScoreLine {
                image_id: image_id.to_string(),
                bbox: r.bbox.to_array(),
                scores: r.scores.clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn write_score_file<W: Write>(out: W, file: &ScoreFile) -> std::io::Result<()> {
    write_scores(
        out,
        file.regions.iter().map(|(k, v)| (k.as_str(), v.as_slice())),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_hist(color: [u8; 3]) -> Vec<f64> {
        color_histogram(&Image::filled(4, 4, color))
    }

    fn model() -> BaselineModel {
        BaselineModel {
            references: vec![
                (0, flat_hist([230, 20, 20])),
                (1, flat_hist([20, 20, 230])),
                (BACKGROUND, flat_hist([128, 128, 128])),
            ],
            temperature: 0.05,
            class_names: vec!["red".into(), "blue".into()],
        }
    }

    #[test]
    fn flat_color_histogram_has_one_bin_per_channel() {
        let h = flat_hist([230, 20, 20]);
        assert_eq!(h.iter().filter(|v| **v > 0.0).count(), 3);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_crop_wins() {
        let m = model();
        let s = m.score_histogram(&flat_hist([20, 20, 230]));
        assert_eq!(s.len(), SCORE_LEN);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let argmax = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 1);
        // classes without references never score
        assert!(s[2..NUM_CLASSES].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gray_crop_is_background() {
        let m = model();
        let img = Image::filled(30, 30, [130, 126, 128]);
        let props = ProposalSet {
            image_id: "g".into(),
            mode: crate::selective_search::ModeTag::Fast,
            boxes: vec![BoundingBox::new(0, 0, 30, 30).unwrap()],
        };
        let r = m.score_regions(&img, &props);
        assert!(r[0].is_background());
    }

    #[test]
    fn score_file_errors() {
        let ok: Vec<f64> = (0..SCORE_LEN).map(|_| 1.0 / SCORE_LEN as f64).collect();
        let line = |scores: &[f64]| {
            format!(
                "{{\"image_id\":\"a\",\"box\":[0,0,5,5],\"scores\":{}}}\n",
                serde_json::to_string(scores).unwrap()
            )
        };
        assert!(read_scores(line(&ok).as_bytes(), "t").is_ok());
        assert!(matches!(
            read_scores(line(&ok[..32]).as_bytes(), "t"),
            Err(ScoringError::UnknownClassCount { line: 1, got: 32 })
        ));
        let half: Vec<f64> = ok.iter().map(|v| v / 2.0).collect();
        assert!(matches!(
            read_scores(line(&half).as_bytes(), "t"),
            Err(ScoringError::ScoreSumOutOfRange { .. })
        ));
        let mut neg = ok.clone();
        neg[0] = -0.01;
        neg[1] += 0.01;
        assert!(matches!(
            read_scores(line(&neg).as_bytes(), "t"),
            Err(ScoringError::MalformedScoreFile { .. })
        ));
        assert!(matches!(
            read_scores(&b"{\"image_id\":\"a\",\"box\":[5,0,5,5],\"scores\":[]}\n"[..], "t"),
            Err(ScoringError::MalformedScoreFile { .. })
        ));
        assert!(matches!(
            read_scores(&b"not json\n"[..], "t"),
            Err(ScoringError::MalformedScoreFile { line: 1, .. })
        ));
    }

    #[test]
    fn near_one_sums_are_renormalised() {
        let raw: Vec<f64> = (0..SCORE_LEN).map(|_| 1.005 / SCORE_LEN as f64).collect();
        let fixed = validate_scores(1, raw).unwrap();
        assert!((fixed.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_file_round_trip() {
        let m = model();
        let img = Image::from_fn(40, 40, |x, _| if x < 20 { [230, 20, 20] } else { [20, 20, 230] });
        let props = ProposalSet {
            image_id: "x".into(),
            mode: crate::selective_search::ModeTag::Fast,
            boxes: vec![
                BoundingBox::new(0, 0, 20, 40).unwrap(),
                BoundingBox::new(0, 0, 40, 40).unwrap(),
            ],
        };
        let regions = m.score_regions(&img, &props);
        let mut buf = Vec::new();
        write_scores(&mut buf, [("x", regions.as_slice())]).unwrap();
        let back = read_scores(&buf[..], "mem").unwrap();
        let got = &back.regions["x"];
        assert_eq!(got.len(), 2);
        for (a, b) in got.iter().zip(&regions) {
            assert_eq!(a.bbox, b.bbox);
            for (x, y) in a.scores.iter().zip(&b.scores) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
