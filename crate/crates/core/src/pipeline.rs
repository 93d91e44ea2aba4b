//! End-to-end detection: proposals, scoring, per-class NMS and the image-level
//! no-logo decision, plus corpus runs with evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Annotation, CorpusIndex, DatasetError, Label, Partition};
use crate::imagecore::Image;
use crate::metrics::{
    default_thresholds, evaluate_map, f1_curve, iou, nms_per_class, BoundingBox, Detection,
    EvalReport, F1Point, ImageTop, MetricsError, NUM_CLASSES,
};
use crate::scoring::{RegionScorer, ScoreFile, ScoredRegion, ScoringError, BACKGROUND};
use crate::selective_search::{propose, ModeTag, ProposalSet, SearchMode};

/// Operating points reported for the two fine-tuned networks.
pub const THRESHOLD_PRESETS: [f64; 3] = [0.32, 0.4, 0.81];
pub const DEFAULT_THRESHOLD: f64 = 0.3;
pub const DEFAULT_NMS_IOU: f64 = 0.3;
pub const DEFAULT_MATCH_IOU: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{image_id}: {source}")]
    Scoring {
        image_id: String,
        source: ScoringError,
    },
    #[error("{image_id}: {source}")]
    Dataset {
        image_id: String,
        source: DatasetError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("scores reference image {0} which is not in the evaluated partition")]
    UnknownImage(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectOptions {
    pub nms_iou: f64,
    pub threshold: f64,
    /// Emit one detection per (region, non-background class) instead of only
    /// the region's best class.
    pub all_classes: bool,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            nms_iou: DEFAULT_NMS_IOU,
            threshold: DEFAULT_THRESHOLD,
            all_classes: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageDecision {
    pub image_id: String,
    /// Post-NMS detections, score descending.
    pub detections: Vec<Detection>,
    pub top: Option<Detection>,
    pub predicted_label: Label,
    /// The image had no proposals (flag, not an error).
    pub no_proposals: bool,
}

/// Converts scored regions into detections: the argmax non-background class
/// per region (or every class with `all_classes`), dropping regions whose
/// overall argmax is background.
pub fn regions_to_detections(
    image_id: &str,
    regions: &[ScoredRegion],
    all_classes: bool,
) -> Vec<Detection> {
    let mut out = Vec::new();
    for r in regions {
        if r.is_background() {
            continue;
        }
        if all_classes {
            for (class, &score) in r.scores[..NUM_CLASSES].iter().enumerate() {
                if score > 0.0 {
                    out.push(Detection {
                        image_id: image_id.to_string(),
                        class_id: class,
                        score,
                        bbox: r.bbox,
                    });
                }
            }
        } else {
            let (class, score) = r.best_class();
            out.push(Detection {
                image_id: image_id.to_string(),
                class_id: class,
                score,
                bbox: r.bbox,
            });
        }
    }
    out
}

/// Highest-scoring detection; ties go to the smaller box, then smaller class.
pub fn top_detection(dets: &[Detection]) -> Option<&Detection> {
    dets.iter().min_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.bbox.cmp(&b.bbox))
            .then_with(|| a.class_id.cmp(&b.class_id))
    })
}

/// Applies NMS and the threshold rule to already scored regions.
pub fn decide(image_id: &str, regions: &[ScoredRegion], opts: &DetectOptions) -> ImageDecision {
    let candidates = regions_to_detections(image_id, regions, opts.all_classes);
    let detections = nms_per_class(&candidates, opts.nms_iou);
    let top = top_detection(&detections).cloned();
    let predicted_label = match &top {
        Some(t) if t.score >= opts.threshold => Label::Logo(t.class_id),
        _ => Label::NoLogo,
    };
    ImageDecision {
        image_id: image_id.to_string(),
        detections,
        top,
        predicted_label,
        no_proposals: regions.is_empty(),
    }
}

/// Scores the proposals of one image and decides it.
pub fn detect_image(
    image_id: &str,
    img: Option<&Image>,
    proposals: &ProposalSet,
    scorer: &dyn RegionScorer,
    opts: &DetectOptions,
) -> Result<ImageDecision, PipelineError> {
    let regions = scorer
        .score(image_id, img, proposals)
        .map_err(|source| PipelineError::Scoring {
            image_id: image_id.to_string(),
            source,
        })?;
    Ok(decide(image_id, &regions, opts))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub partition: Partition,
    pub mode: ModeTag,
    pub nms_iou: f64,
    pub threshold: f64,
    pub match_iou: f64,
    pub scorer: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub decisions: Vec<ImageDecision>,
    pub eval: EvalReport,
    pub f1_curve: Vec<F1Point>,
    /// Filled in by callers that write the curve to disk.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_csv_path: Option<String>,
}

/// Where a corpus run gets its regions from.
pub struct RunInputs<'a> {
    pub mode: &'a SearchMode,
    pub scorer: &'a dyn RegionScorer,
    pub opts: DetectOptions,
    pub match_iou: f64,
    pub thresholds: Vec<f64>,
}

impl<'a> RunInputs<'a> {
    pub fn new(mode: &'a SearchMode, scorer: &'a dyn RegionScorer) -> Self {
        Self {
            mode,
            scorer,
            opts: DetectOptions::default(),
            match_iou: DEFAULT_MATCH_IOU,
            thresholds: default_thresholds(),
        }
    }
}

fn process_image(
    corpus: &CorpusIndex,
    ann: &Annotation,
    inputs: &RunInputs<'_>,
) -> Result<ImageDecision, PipelineError> {
    let (img, proposals) = if inputs.scorer.needs_image() {
        let img = corpus
            .load_image(ann)
            .map_err(|source| PipelineError::Dataset {
                image_id: ann.image_id.clone(),
                source,
            })?;
        let proposals = propose(&img, inputs.mode, &ann.image_id);
        (Some(img), proposals)
    } else {
        let empty = ProposalSet {
            image_id: ann.image_id.clone(),
            mode: inputs.mode.tag,
            boxes: Vec::new(),
        };
        (None, empty)
    };
    detect_image(
        &ann.image_id,
        img.as_ref(),
        &proposals,
        inputs.scorer,
        &inputs.opts,
    )
}

/// Evaluates already computed decisions against the partition ground truth.
pub fn evaluate_decisions(
    annotations: &[Annotation],
    decisions: &[ImageDecision],
    num_classes: usize,
    match_iou: f64,
    thresholds: &[f64],
) -> Result<(EvalReport, Vec<F1Point>), PipelineError> {
    let detections: Vec<Detection> = decisions
        .iter()
        .flat_map(|d| d.detections.iter().cloned())
        .collect();
    let eval = evaluate_map(&detections, annotations, match_iou, num_classes);
    let tops: Vec<ImageTop> = decisions
        .iter()
        .map(|d| ImageTop {
            image_id: d.image_id.clone(),
            top: d.top.as_ref().map(|t| (t.class_id, t.score)),
        })
        .collect();
    let truth: Vec<(String, Label)> = annotations
        .iter()
        .map(|a| (a.image_id.clone(), a.label))
        .collect();
    let curve = f1_curve(&tops, &truth, thresholds)?;
    Ok((eval, curve))
}

/// Rejects score files that mention images outside the evaluated partition.
pub fn check_score_coverage(
    file: &ScoreFile,
    annotations: &[Annotation],
) -> Result<(), PipelineError> {
    let known: std::collections::HashSet<&str> =
        annotations.iter().map(|a| a.image_id.as_str()).collect();
    match file.regions.keys().find(|id| !known.contains(id.as_str())) {
        Some(id) => Err(PipelineError::UnknownImage(id.clone())),
        None => Ok(()),
    }
}

/// Runs every image of a partition and evaluates the result.
pub fn run_corpus(
    corpus: &CorpusIndex,
    partition: Partition,
    inputs: &RunInputs<'_>,
) -> Result<RunReport, PipelineError> {
    let annotations = corpus.partition(partition);
    #[cfg(feature = "parallel")]
    let decisions: Vec<ImageDecision> = {
        use rayon::prelude::*;
        annotations
            .par_iter()
            .map(|a| process_image(corpus, a, inputs))
            .collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let decisions: Vec<ImageDecision> = annotations
        .iter()
        .map(|a| process_image(corpus, a, inputs))
        .collect::<Result<_, _>>()?;

    let (eval, f1_curve) = evaluate_decisions(
        annotations,
        &decisions,
        corpus.num_classes(),
        inputs.match_iou,
        &inputs.thresholds,
    )?;
    Ok(RunReport {
        config: RunConfig {
            partition,
            mode: inputs.mode.tag,
            nms_iou: inputs.opts.nms_iou,
            threshold: inputs.opts.threshold,
            match_iou: inputs.match_iou,
            scorer: inputs.scorer.id(),
        },
        decisions,
        eval,
        f1_curve,
        f1_csv_path: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionLabel {
    Class(usize),
    Background,
}

impl RegionLabel {
    /// Index into a 33-entry score vector.
    pub fn score_index(&self) -> usize {
        match self {
            RegionLabel::Class(c) => *c,
            RegionLabel::Background => BACKGROUND,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledRegion {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub label: RegionLabel,
    pub max_iou: f64,
}

/// Labels proposals by their best overlap with ground truth: at least
/// `pos_iou` takes the matched class, `[neg_lo, neg_hi)` is background, and
/// anything else is dropped.
pub fn sample_training_regions(
    proposals: &[BoundingBox],
    gts: &[(usize, BoundingBox)],
    pos_iou: f64,
    neg_range: (f64, f64),
) -> Vec<LabeledRegion> {
    proposals
        .iter()
        .filter_map(|p| {
            let best = gts
                .iter()
                .map(|(class, g)| (*class, iou(p, g)))
                .fold(None, |acc: Option<(usize, f64)>, cur| match acc {
                    Some(a) if a.1 >= cur.1 => Some(a),
                    _ => Some(cur),
                });
            let (class, overlap) = best.unwrap_or((0, 0.0));
            let label = if overlap >= pos_iou {
                RegionLabel::Class(class)
            } else if overlap >= neg_range.0 && overlap < neg_range.1 {
                RegionLabel::Background
            } else {
                return None;
            };
            Some(LabeledRegion {
                bbox: *p,
                label,
                max_iou: overlap,
            })
        })
        .collect()
}
