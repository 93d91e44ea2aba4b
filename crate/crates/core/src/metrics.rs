//! Box geometry and ranked-retrieval metrics: IoU, greedy NMS, average
//! precision, PASCAL-style matching and threshold F1 curves.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Annotation, Label};

/// Number of logo classes in the score layout.
pub const NUM_CLASSES: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("detections span multiple images or classes")]
    MixedKeys,
    #[error("image {0} appears more than once")]
    DuplicateImage(String),
    #[error("image {0} has no ground truth entry")]
    UnknownImage(String),
    #[error("threshold grid must be strictly increasing within [0, 1]")]
    InvalidThresholds,
    #[error("invalid box ({x0}, {y0}, {x1}, {y1})")]
    InvalidBox { x0: u32, y0: u32, x1: u32, y1: u32 },
}

/// Axis-aligned pixel rectangle, `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct BoundingBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BoundingBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self, MetricsError> {
        if x1 > x0 && y1 > y0 {
            Ok(Self { x0, y0, x1, y1 })
        } else {
            Err(MetricsError::InvalidBox { x0, y0, x1, y1 })
        }
    }

    /// From an `x y width height` row.
    pub fn from_xywh(x: u32, y: u32, w: u32, h: u32) -> Result<Self, MetricsError> {
        Self::new(x, y, x.saturating_add(w), y.saturating_add(h))
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    #[inline]
    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        let w = self.x1.min(other.x1).saturating_sub(self.x0.max(other.x0));
        let h = self.y1.min(other.y1).saturating_sub(self.y0.max(other.y0));
        u64::from(w) * u64::from(h)
    }

    /// Smallest box containing both.
    pub fn union_bounds(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }

    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.x1 as usize <= width && self.y1 as usize <= height
    }

    pub fn to_array(self) -> [u32; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }
}

impl TryFrom<[u32; 4]> for BoundingBox {
    type Error = MetricsError;

    fn try_from([x0, y0, x1, y1]: [u32; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(x0, y0, x1, y1)
    }
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

impl std::fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x0, self.y0, self.x1, self.y1)
    }
}

/// Intersection over union. Disjoint boxes give 0.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// A scored, class-labelled box in one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub class_id: usize,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

/// Score descending, then box ascending.
fn by_score_then_box(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.bbox.cmp(&b.bbox))
}

/// Greedy non-maximum suppression over detections of a single image and class.
/// A detection is dropped when its IoU with an already kept one exceeds
/// `iou_threshold`. Survivors come back in score order.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>, MetricsError> {
    if let Some(first) = dets.first() {
        if dets
            .iter()
            .any(|d| d.image_id != first.image_id || d.class_id != first.class_id)
        {
            return Err(MetricsError::MixedKeys);
        }
    }
    let mut sorted = dets.to_vec();
    sorted.sort_by(by_score_then_box);
    let mut kept: Vec<Detection> = Vec::new();
    for det in sorted {
        if kept.iter().all(|k| iou(&k.bbox, &det.bbox) <= iou_threshold) {
            kept.push(det);
        }
    }
    Ok(kept)
}

/// Applies [`nms`] independently to every (image, class) group.
pub fn nms_per_class(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut groups: BTreeMap<(&str, usize), Vec<Detection>> = BTreeMap::new();
    for d in dets {
        groups
            .entry((d.image_id.as_str(), d.class_id))
            .or_default()
            .push(d.clone());
    }
    let mut out: Vec<Detection> = groups
        .into_values()
        .flat_map(|g| nms(&g, iou_threshold).expect("grouped by key"))
        .collect();
    out.sort_by(|a, b| by_score_then_box(a, b).then_with(|| a.class_id.cmp(&b.class_id)));
    out
}

/// Uninterpolated average precision, `sum_k P(k) * dR(k)`, over a ranked list
/// already sorted by descending score. `dR(k)` is `1 / total_positives` at a
/// true positive and zero otherwise. No positives gives 0.
///
/// Short lists are summed in exact rational arithmetic so the result is the
/// correctly rounded value of the sum; longer ones fall back to floating point.
pub fn average_precision(ranked: &[(f64, bool)], total_positives: usize) -> f64 {
    if total_positives == 0 {
        return 0.0;
    }
    exact_average_precision(ranked, total_positives)
        .unwrap_or_else(|| float_average_precision(ranked, total_positives))
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `(1 / P) * sum over true positives of tp(k) / k`, as a reduced fraction.
fn exact_average_precision(ranked: &[(f64, bool)], total_positives: usize) -> Option<f64> {
    const EXACT: u128 = 1 << 53;
    let (mut num, mut den) = (0u128, 1u128);
    let mut tp = 0u128;
    for (k, &(_, is_tp)) in ranked.iter().enumerate() {
        if !is_tp {
            continue;
        }
        tp += 1;
        let rank = k as u128 + 1;
        num = num.checked_mul(rank)?.checked_add(tp.checked_mul(den)?)?;
        den = den.checked_mul(rank)?;
        let g = gcd(num, den);
        num /= g;
        den /= g;
    }
    den = den.checked_mul(total_positives as u128)?;
    let g = gcd(num, den).max(1);
    let (num, den) = (num / g, den / g);
    // both operands exactly representable, so the division rounds once
    (num < EXACT && den < EXACT).then(|| num as f64 / den as f64)
}

fn float_average_precision(ranked: &[(f64, bool)], total_positives: usize) -> f64 {
    let mut tp = 0usize;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (k, &(_, is_tp)) in ranked.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        let precision = tp as f64 / (k + 1) as f64;
        let recall = tp as f64 / total_positives as f64;
        ap += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    ap
}

/// (precision, recall) at every rank.
pub fn precision_recall_points(ranked: &[(f64, bool)], total_positives: usize) -> Vec<(f64, f64)> {
    let mut tp = 0usize;
    ranked
        .iter()
        .enumerate()
        .map(|(k, &(_, is_tp))| {
            tp += usize::from(is_tp);
            let recall = if total_positives == 0 {
                0.0
            } else {
                tp as f64 / total_positives as f64
            };
            (tp as f64 / (k + 1) as f64, recall)
        })
        .collect()
}

/// Ranked TP/FP list for one class.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMatches {
    pub ranked: Vec<(f64, bool)>,
    pub total_positives: usize,
}

/// Greedy PASCAL matching. Detections of each class are visited in descending
/// score order; each claims the highest-IoU still-unmatched ground-truth box of
/// its class in its image when that IoU reaches `iou_min`, otherwise it is a
/// false positive.
pub fn match_detections(
    dets: &[Detection],
    gts: &[Annotation],
    iou_min: f64,
) -> BTreeMap<usize, ClassMatches> {
    let mut out: BTreeMap<usize, ClassMatches> = BTreeMap::new();
    // (image, class) -> gt boxes
    let mut gt_boxes: HashMap<(&str, usize), Vec<BoundingBox>> = HashMap::new();
    for ann in gts {
        if let Label::Logo(class) = ann.label {
            out.entry(class).or_default().total_positives += ann.boxes.len();
            gt_boxes
                .entry((ann.image_id.as_str(), class))
                .or_default()
                .extend(ann.boxes.iter().copied());
        }
    }

    let mut by_class: BTreeMap<usize, Vec<&Detection>> = BTreeMap::new();
    for d in dets {
        by_class.entry(d.class_id).or_default().push(d);
    }
    for (class, mut class_dets) in by_class {
        class_dets.sort_by(|a, b| {
            by_score_then_box(a, b).then_with(|| a.image_id.cmp(&b.image_id))
        });
        let mut consumed: HashMap<&str, Vec<bool>> = HashMap::new();
        let entry = out.entry(class).or_default();
        for d in class_dets {
            let mut is_tp = false;
            if let Some(boxes) = gt_boxes.get(&(d.image_id.as_str(), class)) {
                let used = consumed
                    .entry(d.image_id.as_str())
                    .or_insert_with(|| vec![false; boxes.len()]);
                let mut best: Option<(usize, f64)> = None;
                for (i, gt) in boxes.iter().enumerate() {
                    if used[i] {
                        continue;
                    }
                    let o = iou(&d.bbox, gt);
                    if best.is_none_or(|(_, b)| o > b) {
                        best = Some((i, o));
                    }
                }
                if let Some((i, o)) = best {
                    if o >= iou_min {
                        used[i] = true;
                        is_tp = true;
                    }
                }
            }
            entry.ranked.push((d.score, is_tp));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_classes: usize,
    pub per_class_ap: Vec<f64>,
    pub map: f64,
    pub pr_points: Vec<Vec<(f64, f64)>>,
    pub ground_truth_counts: Vec<usize>,
    pub detection_counts: Vec<usize>,
    /// Classes without any ground truth; their AP is reported as 0.
    pub empty_classes: Vec<usize>,
    pub iou_min: f64,
}

/// Per-class AP and their mean over classes `0..num_classes`.
pub fn evaluate_map(
    dets: &[Detection],
    gts: &[Annotation],
    iou_min: f64,
    num_classes: usize,
) -> EvalReport {
    let matches = match_detections(dets, gts, iou_min);
    let mut per_class_ap = Vec::with_capacity(num_classes);
    let mut pr_points = Vec::with_capacity(num_classes);
    let mut ground_truth_counts = Vec::with_capacity(num_classes);
    let mut detection_counts = Vec::with_capacity(num_classes);
    let mut empty_classes = Vec::new();
    for class in 0..num_classes {
        let m = matches.get(&class).cloned().unwrap_or_default();
        if m.total_positives == 0 {
            empty_classes.push(class);
        }
        per_class_ap.push(average_precision(&m.ranked, m.total_positives));
        pr_points.push(precision_recall_points(&m.ranked, m.total_positives));
        ground_truth_counts.push(m.total_positives);
        detection_counts.push(m.ranked.len());
    }
    let map = if num_classes == 0 {
        0.0
    } else {
        per_class_ap.iter().sum::<f64>() / num_classes as f64
    };
    EvalReport {
        num_classes,
        per_class_ap,
        map,
        pr_points,
        ground_truth_counts,
        detection_counts,
        empty_classes,
        iou_min,
    }
}

/// The highest-scoring logo detection of one image, if any.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageTop {
    pub image_id: String,
    pub top: Option<(usize, f64)>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No positive predictions were made; precision is reported as 1.
    pub zero_predictions: bool,
}

impl Prf {
    /// Precision is 1 without predictions; recall is 1 without positives.
    fn from_counts(tp: usize, predicted: usize, actual: usize) -> Self {
        let precision = if predicted == 0 {
            1.0
        } else {
            tp as f64 / predicted as f64
        };
        let recall = if actual == 0 {
            1.0
        } else {
            tp as f64 / actual as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            tp,
            fp: predicted - tp,
            fn_: actual - tp,
            precision,
            recall,
            f1,
            zero_predictions: predicted == 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Point {
    pub threshold: f64,
    pub detection: Prf,
    pub recognition: Prf,
}

/// Default grid: 0.00, 0.01, ..., 1.00.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).map(|i| f64::from(i) / 100.0).collect()
}

type Joined = Vec<(Option<(usize, f64)>, Label)>;

fn join_tops<'a>(
    per_image_top: &'a [ImageTop],
    truth: &'a [(String, Label)],
) -> Result<Joined, MetricsError> {
    let mut truth_map: HashMap<&str, Label> = HashMap::with_capacity(truth.len());
    for (id, label) in truth {
        if truth_map.insert(id.as_str(), *label).is_some() {
            return Err(MetricsError::DuplicateImage(id.clone()));
        }
    }
    let mut seen = BTreeSet::new();
    let mut joined = Vec::with_capacity(per_image_top.len());
    for t in per_image_top {
        if !seen.insert(t.image_id.as_str()) {
            return Err(MetricsError::DuplicateImage(t.image_id.clone()));
        }
        let label = *truth_map
            .get(t.image_id.as_str())
            .ok_or_else(|| MetricsError::UnknownImage(t.image_id.clone()))?;
        joined.push((t.top, label));
    }
    if let Some((id, _)) = truth.iter().find(|(id, _)| !seen.contains(id.as_str())) {
        return Err(MetricsError::UnknownImage(id.clone()));
    }
    Ok(joined)
}

fn f1_at(joined: &[(Option<(usize, f64)>, Label)], threshold: Option<f64>) -> (Prf, Prf) {
    let logo_images = joined.iter().filter(|(_, l)| l.is_logo()).count();
    let mut logo_predictions = 0;
    let mut detected_logo_images = 0;
    let mut correct = 0;
    for (top, label) in joined {
        let predicted = top.filter(|&(_, score)| threshold.is_none_or(|t| score >= t));
        if let Some((class, _)) = predicted {
            logo_predictions += 1;
            if let Label::Logo(truth) = label {
                detected_logo_images += 1;
                if *truth == class {
                    correct += 1;
                }
            }
        }
    }
    (
        Prf::from_counts(detected_logo_images, logo_predictions, logo_images),
        Prf::from_counts(correct, logo_predictions, logo_images),
    )
}

/// Detection (logo vs no-logo) and recognition (correct brand) scores at each
/// threshold. An image is predicted as its top class when the top score is at
/// least the threshold and as no-logo otherwise.
pub fn f1_curve(
    per_image_top: &[ImageTop],
    truth: &[(String, Label)],
    thresholds: &[f64],
) -> Result<Vec<F1Point>, MetricsError> {
    if thresholds.windows(2).any(|w| w[0] >= w[1])
        || thresholds.iter().any(|t| !(0.0..=1.0).contains(t))
    {
        return Err(MetricsError::InvalidThresholds);
    }
    let joined = join_tops(per_image_top, truth)?;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let (detection, recognition) = f1_at(&joined, Some(t));
            F1Point {
                threshold: t,
                detection,
                recognition,
            }
        })
        .collect())
}

/// Recognition scores when every image is assigned its top class.
pub fn recognition_without_threshold(
    per_image_top: &[ImageTop],
    truth: &[(String, Label)],
) -> Result<Prf, MetricsError> {
    let joined = join_tops(per_image_top, truth)?;
    Ok(f1_at(&joined, None).1)
}

/// `threshold,detection_f1,recognition_f1` rows.
pub fn f1_csv(points: &[F1Point]) -> String {
    let mut out = String::from("threshold,detection_f1,recognition_f1\n");
    for p in points {
        out.push_str(&format!(
            "{:.2},{},{}\n",
            p.threshold, p.detection.f1, p.recognition.f1
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x0: u32, y0: u32, x1: u32, y1: u32) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    fn det(image: &str, class: usize, score: f64, b: BoundingBox) -> Detection {
        Detection {
            image_id: image.into(),
            class_id: class,
            score,
            bbox: b,
        }
    }

    fn logo(image: &str, class: usize, boxes: Vec<BoundingBox>) -> Annotation {
        Annotation {
            image_id: image.into(),
            label: Label::Logo(class),
            boxes,
        }
    }

    #[test]
    fn invalid_box_rejected() {
        assert!(BoundingBox::new(3, 0, 3, 5).is_err());
        assert!(serde_json::from_str::<BoundingBox>("[5,5,2,9]").is_err());
        assert_eq!(
            serde_json::from_str::<BoundingBox>("[1,2,3,4]").unwrap(),
            bb(1, 2, 3, 4)
        );
    }

    #[test]
    fn iou_examples() {
        let a = bb(0, 0, 10, 10);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(20, 20, 30, 30)), 0.0);
        assert_eq!(iou(&a, &bb(0, 5, 10, 15)), 50.0 / 150.0);
        // touching edges do not overlap
        assert_eq!(iou(&a, &bb(10, 0, 20, 10)), 0.0);
    }

    #[test]
    fn nms_examples() {
        let a = bb(0, 0, 10, 10);
        assert_eq!(nms(&[det("i", 1, 0.5, a)], 0.3).unwrap().len(), 1);

        let kept = nms(&[det("i", 1, 0.8, a), det("i", 1, 0.9, a)], 0.5).unwrap();
        assert_eq!(kept, vec![det("i", 1, 0.9, a)]);

        // B = (0, 0, 10, 16) has iou 100/160 = 0.625 with A; C is far away
        let b = bb(0, 0, 10, 16);
        assert!((iou(&a, &b) - 0.625).abs() < 1e-12);
        let c = bb(50, 50, 60, 60);
        let kept = nms(
            &[det("i", 2, 0.8, b), det("i", 2, 0.7, c), det("i", 2, 0.9, a)],
            0.5,
        )
        .unwrap();
        assert_eq!(kept, vec![det("i", 2, 0.9, a), det("i", 2, 0.7, c)]);
    }

    #[test]
    fn nms_rejects_mixed_keys() {
        let a = bb(0, 0, 10, 10);
        assert_eq!(
            nms(&[det("i", 1, 0.5, a), det("j", 1, 0.5, a)], 0.3),
            Err(MetricsError::MixedKeys)
        );
        assert_eq!(
            nms(&[det("i", 1, 0.5, a), det("i", 2, 0.5, a)], 0.3),
            Err(MetricsError::MixedKeys)
        );
        assert_eq!(nms(&[], 0.3), Ok(vec![]));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[(0.9, true)], 1), 1.0);
        assert_eq!(average_precision(&[(0.9, false), (0.8, true)], 1), 0.5);
        let ap = average_precision(&[(0.9, true), (0.8, false), (0.7, true)], 2);
        assert_eq!(ap, 5.0 / 6.0);
        // beyond the exact range the float sum is used
        let long: Vec<(f64, bool)> = (0..200).map(|i| (1.0 - i as f64 / 200.0, i % 3 != 1)).collect();
        let exact_free = float_average_precision(&long, 150);
        assert!((average_precision(&long, 150) - exact_free).abs() < 1e-12);
        assert_eq!(average_precision(&[], 0), 0.0);
        assert_eq!(average_precision(&[], 3), 0.0);
    }

    #[test]
    fn matching_consumes_ground_truth() {
        let gt = bb(0, 0, 10, 10);
        let gts = vec![logo("a", 0, vec![gt])];
        let m = match_detections(&[det("a", 0, 0.7, gt)], &gts, 0.5);
        assert_eq!(m[&0].ranked, vec![(0.7, true)]);

        let m = match_detections(&[det("a", 0, 0.8, gt), det("a", 0, 0.9, gt)], &gts, 0.5);
        assert_eq!(m[&0].ranked, vec![(0.9, true), (0.8, false)]);

        // (0, 0, 10, 10) vs (0, 0, 10, 4): 40 / 100 = 0.4
        let low = bb(0, 0, 10, 4);
        assert!((iou(&low, &gt) - 0.4).abs() < 1e-12);
        let m = match_detections(&[det("a", 0, 0.9, low)], &gts, 0.5);
        assert_eq!(m[&0].ranked, vec![(0.9, false)]);

        // right class, wrong image
        let m = match_detections(&[det("b", 0, 0.9, gt)], &gts, 0.5);
        assert_eq!(m[&0].ranked, vec![(0.9, false)]);
        assert_eq!(m[&0].total_positives, 1);
    }

    #[test]
    fn matching_takes_best_unmatched() {
        let g1 = bb(0, 0, 10, 10);
        let g2 = bb(2, 0, 12, 10);
        let gts = vec![logo("a", 0, vec![g1, g2])];
        // first det overlaps g2 best; second is closer to g2 too but gets g1
        let d1 = det("a", 0, 0.9, bb(2, 0, 12, 10));
        let d2 = det("a", 0, 0.8, bb(1, 0, 11, 10));
        let m = match_detections(&[d2, d1], &gts, 0.5);
        assert_eq!(m[&0].ranked, vec![(0.9, true), (0.8, true)]);
    }

    #[test]
    fn map_examples() {
        let g0 = bb(0, 0, 10, 10);
        let g1 = bb(20, 20, 40, 40);
        let gts = vec![logo("a", 0, vec![g0]), logo("b", 1, vec![g1])];
        let perfect = vec![det("a", 0, 0.9, g0), det("b", 1, 0.8, g1)];
        let r = evaluate_map(&perfect, &gts, 0.5, 2);
        assert_eq!(r.map, 1.0);
        let r = evaluate_map(&[], &gts, 0.5, 2);
        assert_eq!(r.map, 0.0);

        // class 0 ranked [F, T] over 1 positive -> 0.5;
        // class 1 ranked [T, F, T] over 2 positives -> 5/6
        let g1b = bb(50, 50, 60, 60);
        let gts = vec![
            logo("a", 0, vec![g0]),
            logo("b", 1, vec![g1]),
            logo("c", 1, vec![g1b]),
        ];
        let dets = vec![
            det("x", 0, 0.9, g0),
            det("a", 0, 0.8, g0),
            det("b", 1, 0.9, g1),
            det("b", 1, 0.8, g1b),
            det("c", 1, 0.7, g1b),
        ];
        let r = evaluate_map(&dets, &gts, 0.5, 2);
        assert_eq!(r.per_class_ap[0], 0.5);
        assert!((r.per_class_ap[1] - 5.0 / 6.0).abs() < 1e-15);
        assert!((r.map - (0.5 + 5.0 / 6.0) / 2.0).abs() < 1e-15);
        assert!(r.empty_classes.is_empty());

        let r = evaluate_map(&dets, &gts, 0.5, 4);
        assert_eq!(r.empty_classes, vec![2, 3]);
        assert_eq!(r.per_class_ap.len(), 4);
    }

    fn top(id: &str, top: Option<(usize, f64)>) -> ImageTop {
        ImageTop {
            image_id: id.into(),
            top,
        }
    }

    #[test]
    fn f1_perfect_corpus() {
        let tops = vec![top("a", Some((0, 1.0))), top("b", Some((1, 1.0)))];
        let truth = vec![("a".into(), Label::Logo(0)), ("b".into(), Label::Logo(1))];
        let p = &f1_curve(&tops, &truth, &[0.5]).unwrap()[0];
        assert_eq!(p.detection.f1, 1.0);
        assert_eq!(p.recognition.f1, 1.0);
    }

    fn micro_corpus() -> (Vec<ImageTop>, Vec<(String, Label)>) {
        let tops = vec![
            top("l1", Some((1, 0.9))),
            top("l2", Some((1, 0.4))),
            top("l3", Some((3, 0.8))),
            top("n1", Some((0, 0.2))),
            top("n2", Some((5, 0.35))),
            top("n3", Some((7, 0.7))),
        ];
        let truth = vec![
            ("l1".into(), Label::Logo(1)),
            ("l2".into(), Label::Logo(1)),
            ("l3".into(), Label::Logo(2)),
            ("n1".into(), Label::NoLogo),
            ("n2".into(), Label::NoLogo),
            ("n3".into(), Label::NoLogo),
        ];
        (tops, truth)
    }

    #[test]
    fn f1_micro_corpus_enumerated() {
        // t = 0.5: logo predictions on l1 (correct), l3 (wrong brand), n3 (no-logo).
        // detection: tp 2 (l1, l3), fp 1 (n3), fn 1 (l2)
        // recognition: correct 1 of 3 predictions, 1 of 3 logo images
        let (tops, truth) = micro_corpus();
        let p = &f1_curve(&tops, &truth, &[0.5]).unwrap()[0];
        assert_eq!((p.detection.tp, p.detection.fp, p.detection.fn_), (2, 1, 1));
        assert!((p.detection.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(p.recognition.tp, 1);
        assert!((p.recognition.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.recognition.recall - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.recognition.f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_degenerate_thresholds() {
        let (tops, truth) = micro_corpus();
        let pts = f1_curve(&tops, &truth, &[0.0, 0.95]).unwrap();
        assert_eq!(pts[0].detection.recall, 1.0);
        assert_eq!(pts[0].detection.precision, 0.5);
        let free = recognition_without_threshold(&tops, &truth).unwrap();
        assert_eq!(pts[0].recognition, free);
        assert!(pts[1].detection.zero_predictions);
        assert_eq!(pts[1].detection.f1, 0.0);
        assert_eq!(pts[1].recognition.f1, 0.0);
    }

    #[test]
    fn f1_only_no_logo_images() {
        let truth = vec![("n1".into(), Label::NoLogo), ("n2".into(), Label::NoLogo)];
        let silent = vec![top("n1", Some((0, 0.2))), top("n2", None)];
        let p = &f1_curve(&silent, &truth, &[0.5]).unwrap()[0];
        assert!(p.recognition.zero_predictions);
        assert_eq!(p.recognition.precision, 1.0);
        assert_eq!(p.detection.f1, 1.0);
        let loud = vec![top("n1", Some((0, 0.6))), top("n2", None)];
        let p = &f1_curve(&loud, &truth, &[0.5]).unwrap()[0];
        assert_eq!(p.detection.f1, 0.0);
    }

    #[test]
    fn f1_input_errors() {
        let (tops, truth) = micro_corpus();
        let mut dup = tops.clone();
        dup.push(tops[0].clone());
        assert_eq!(
            f1_curve(&dup, &truth, &[0.5]),
            Err(MetricsError::DuplicateImage("l1".into()))
        );
        assert_eq!(
            f1_curve(&tops, &truth, &[0.5, 0.5]),
            Err(MetricsError::InvalidThresholds)
        );
        assert_eq!(
            f1_curve(&tops[1..], &truth, &[0.5]),
            Err(MetricsError::UnknownImage("l1".into()))
        );
    }

    #[test]
    fn csv_layout() {
        let (tops, truth) = micro_corpus();
        let csv = f1_csv(&f1_curve(&tops, &truth, &[0.0, 0.5]).unwrap());
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("threshold,detection_f1,recognition_f1"));
        assert!(lines.next().unwrap().starts_with("0.00,"));
        assert_eq!(default_thresholds().len(), 101);
    }
}
