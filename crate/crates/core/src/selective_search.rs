//! Selective search: hierarchical grouping of initial segments into
//! class-agnostic box proposals.
//!
//! Each initial segment becomes a [`RegionNode`] carrying a colour histogram
//! (25 bins per channel) and a gradient-orientation texture histogram
//! (8 orientations x 10 response bins per channel). Neighbouring regions are
//! merged greedily by the summed colour, texture, size and fill similarities
//! until one region covers the image; the box of every region ever formed is a
//! proposal. Running that grouping on several segmentation scales and taking
//! the union gives the Fast (two scales) and Quality (four scales) modes.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{gaussian_smooth_planes, to_hsv, Image};
use crate::metrics::BoundingBox;
use crate::segmentation::{segment_graph, segment_sizes, SegmentLabeling, SegmentationParams};

pub const COLOR_BINS: usize = 25;
pub const COLOR_HIST_LEN: usize = COLOR_BINS * 3;
pub const TEXTURE_ORIENTATIONS: usize = 8;
pub const TEXTURE_BINS: usize = 10;
pub const TEXTURE_HIST_LEN: usize = TEXTURE_ORIENTATIONS * TEXTURE_BINS * 3;
/// Proposals narrower or shorter than this are discarded.
pub const MIN_PROPOSAL_SIDE: u32 = 20;

/// Largest possible directional response of a central difference on 8-bit data.
const TEXTURE_RESPONSE_MAX: f64 = 180.5;
const TEXTURE_SIGMA: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ProposalError {
    #[error("labeling is {got_w}x{got_h} but image is {want_w}x{want_h}")]
    DimensionMismatch {
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("{mode:?} mode needs {expected} scales, got {got}")]
    ScaleCount {
        mode: ModeTag,
        expected: usize,
        got: usize,
    },
    #[error("proposal line {line}: {message}")]
    MalformedProposals { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeTag {
    Fast,
    Quality,
}

impl ModeTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModeTag::Fast => "fast",
            ModeTag::Quality => "quality",
        }
    }
}

impl std::str::FromStr for ModeTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fast" => Ok(ModeTag::Fast),
            "quality" => Ok(ModeTag::Quality),
            other => Err(format!("unknown mode `{other}` (expected fast or quality)")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    #[default]
    Rgb,
    Hsv,
}

/// Proposal configuration: the set of segmentation scales to union.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchMode {
    pub tag: ModeTag,
    pub scales: Vec<f64>,
    pub sigma: f64,
    pub color_space: ColorSpace,
}

impl SearchMode {
    /// Checks the scale count against the mode (2 for Fast, 4 for Quality).
    pub fn new(tag: ModeTag, scales: Vec<f64>) -> Result<Self, ProposalError> {
        let expected = match tag {
            ModeTag::Fast => 2,
            ModeTag::Quality => 4,
        };
        if scales.len() != expected {
            return Err(ProposalError::ScaleCount {
                mode: tag,
                expected,
                got: scales.len(),
            });
        }
        Ok(Self {
            tag,
            scales,
            sigma: 0.8,
            color_space: ColorSpace::Rgb,
        })
    }

    pub fn fast() -> Self {
        Self::new(ModeTag::Fast, vec![100.0, 200.0]).expect("two scales")
    }

    pub fn quality() -> Self {
        Self::new(ModeTag::Quality, vec![50.0, 100.0, 150.0, 300.0]).expect("four scales")
    }

    pub fn preset(tag: ModeTag) -> Self {
        match tag {
            ModeTag::Fast => Self::fast(),
            ModeTag::Quality => Self::quality(),
        }
    }

    pub fn with_color_space(mut self, color_space: ColorSpace) -> Self {
        self.color_space = color_space;
        self
    }

    /// Segmentation parameters for one scale; the minimum segment size follows
    /// the scale.
    pub fn segmentation_params(&self, scale: f64) -> SegmentationParams {
        SegmentationParams::new(scale, (scale.round() as usize).max(1), self.sigma)
    }
}

/// A region in the grouping hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionNode {
    pub id: usize,
    pub size: usize,
    pub bbox: BoundingBox,
    pub color_hist: Vec<f64>,
    pub texture_hist: Vec<f64>,
}

impl RegionNode {
    /// Size-weighted union of two regions.
    pub fn merge(&self, other: &RegionNode, id: usize) -> RegionNode {
        let size = self.size + other.size;
        let (wa, wb) = (
            self.size as f64 / size as f64,
            other.size as f64 / size as f64,
        );
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x * wa + y * wb).collect()
        };
        RegionNode {
            id,
            size,
            bbox: self.bbox.union_bounds(&other.bbox),
            color_hist: mix(&self.color_hist, &other.color_hist),
            texture_hist: mix(&self.texture_hist, &other.texture_hist),
        }
    }
}

/// Histogram bins one pixel falls into.
#[derive(Clone, Debug)]
pub struct PixelFeatures {
    /// `COLOR_HIST_LEN`-space bin index for each channel.
    pub color: [u16; 3],
    /// `TEXTURE_HIST_LEN`-space bin index for each (channel, orientation).
    pub texture: [u16; 3 * TEXTURE_ORIENTATIONS],
}

#[inline]
pub fn color_bin(value: u8) -> usize {
    usize::from(value) * COLOR_BINS / 256
}

/// Per-pixel histogram bin assignment for the whole image.
pub fn pixel_features(img: &Image) -> Vec<PixelFeatures> {
    let (w, h) = (img.width(), img.height());
    let planes = gaussian_smooth_planes(img, TEXTURE_SIGMA);
    let dirs: [(f64, f64); TEXTURE_ORIENTATIONS] = std::array::from_fn(|o| {
        let a = o as f64 * std::f64::consts::FRAC_PI_4;
        (a.cos(), a.sin())
    });
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let p = img.get(x, y);
            let color = std::array::from_fn(|c| (c * COLOR_BINS + color_bin(p[c])) as u16);
            let mut texture = [0u16; 3 * TEXTURE_ORIENTATIONS];
            for (c, plane) in planes.iter().enumerate() {
                let at = |xx: usize, yy: usize| f64::from(plane.get(xx, yy));
                let gx = (at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y)) / 2.0;
                let gy = (at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1))) / 2.0;
                for (o, (cos, sin)) in dirs.iter().enumerate() {
                    let response = (gx * cos + gy * sin).max(0.0);
                    let bin = ((response / TEXTURE_RESPONSE_MAX * TEXTURE_BINS as f64) as usize)
                        .min(TEXTURE_BINS - 1);
                    texture[c * TEXTURE_ORIENTATIONS + o] =
                        ((c * TEXTURE_ORIENTATIONS + o) * TEXTURE_BINS + bin) as u16;
                }
            }
            out.push(PixelFeatures { color, texture });
        }
    }
    out
}

/// L1-normalised 75-bin colour histogram of a whole image (or crop).
pub fn color_histogram(img: &Image) -> Vec<f64> {
    let mut hist = vec![0.0; COLOR_HIST_LEN];
    for p in img.pixels() {
        for c in 0..3 {
            hist[c * COLOR_BINS + color_bin(p[c])] += 1.0;
        }
    }
    let total = (img.len() * 3) as f64;
    hist.iter_mut().for_each(|v| *v /= total);
    hist
}

/// Builds one [`RegionNode`] per initial segment.
pub fn initial_regions(
    labeling: &SegmentLabeling,
    features: &[PixelFeatures],
) -> Vec<RegionNode> {
    let n = labeling.segment_count();
    let sizes = segment_sizes(labeling);
    let mut color = vec![vec![0.0; COLOR_HIST_LEN]; n];
    let mut texture = vec![vec![0.0; TEXTURE_HIST_LEN]; n];
    let mut bounds = vec![(u32::MAX, u32::MAX, 0u32, 0u32); n];
    let w = labeling.width();
    for (i, (&label, f)) in labeling.labels().iter().zip(features).enumerate() {
        let l = label as usize;
        let (x, y) = ((i % w) as u32, (i / w) as u32);
        let b = &mut bounds[l];
        *b = (b.0.min(x), b.1.min(y), b.2.max(x + 1), b.3.max(y + 1));
        for &c in &f.color {
            color[l][c as usize] += 1.0;
        }
        for &t in &f.texture {
            texture[l][t as usize] += 1.0;
        }
    }
    (0..n)
        .map(|l| {
            let cs = (sizes[l] * 3) as f64;
            let ts = (sizes[l] * 3 * TEXTURE_ORIENTATIONS) as f64;
            let (x0, y0, x1, y1) = bounds[l];
            RegionNode {
                id: l,
                size: sizes[l],
                bbox: BoundingBox { x0, y0, x1, y1 },
                color_hist: color[l].iter().map(|v| v / cs).collect(),
                texture_hist: texture[l].iter().map(|v| v / ts).collect(),
            }
        })
        .collect()
}

fn intersection(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.min(*y)).sum()
}

/// Individual similarity terms, each clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityTerms {
    pub color: f64,
    pub texture: f64,
    pub size: f64,
    pub fill: f64,
}

impl SimilarityTerms {
    pub fn total(&self) -> f64 {
        self.color + self.texture + self.size + self.fill
    }
}

pub fn similarity_terms(a: &RegionNode, b: &RegionNode, image_size: usize) -> SimilarityTerms {
    let im = image_size as f64;
    let joint = (a.size + b.size) as f64;
    let union_area = a.bbox.union_bounds(&b.bbox).area() as f64;
    SimilarityTerms {
        color: intersection(&a.color_hist, &b.color_hist).clamp(0.0, 1.0),
        texture: intersection(&a.texture_hist, &b.texture_hist).clamp(0.0, 1.0),
        size: (1.0 - joint / im).clamp(0.0, 1.0),
        fill: (1.0 - (union_area - joint) / im).clamp(0.0, 1.0),
    }
}

/// Combined similarity in `[0, 4]`.
pub fn similarity(a: &RegionNode, b: &RegionNode, image_size: usize) -> f64 {
    similarity_terms(a, b, image_size).total()
}

/// Unordered pairs of 8-adjacent segments, as `(low, high)`.
pub fn neighbor_pairs(labeling: &SegmentLabeling) -> BTreeSet<(usize, usize)> {
    let (w, h) = (labeling.width(), labeling.height());
    let mut pairs = BTreeSet::new();
    let mut add = |a: u32, b: u32| {
        if a != b {
            pairs.insert((a.min(b) as usize, a.max(b) as usize));
        }
    };
    for y in 0..h {
        for x in 0..w {
            let l = labeling.label(x, y);
            if x + 1 < w {
                add(l, labeling.label(x + 1, y));
            }
            if y + 1 < h {
                add(l, labeling.label(x, y + 1));
                if x + 1 < w {
                    add(l, labeling.label(x + 1, y + 1));
                }
                if x > 0 {
                    add(l, labeling.label(x - 1, y + 1));
                }
            }
        }
    }
    pairs
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    sim: f64,
    a: usize,
    b: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // max-heap: higher similarity first, then the smaller (a, b) pair
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| (other.a, other.b).cmp(&(self.a, self.b)))
    }
}

/// Output of one grouping pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroupingResult {
    /// Initial segment boxes by id, then one box per merge.
    pub boxes: Vec<BoundingBox>,
    /// `(a, b, similarity)` in merge order; the merged region gets the next id.
    pub merges: Vec<(usize, usize, f64)>,
}

/// Greedy hierarchical grouping over an initial segmentation.
pub fn grouping_pass(
    img: &Image,
    labeling: &SegmentLabeling,
) -> Result<GroupingResult, ProposalError> {
    if img.width() != labeling.width() || img.height() != labeling.height() {
        return Err(ProposalError::DimensionMismatch {
            want_w: img.width(),
            want_h: img.height(),
            got_w: labeling.width(),
            got_h: labeling.height(),
        });
    }
    let features = pixel_features(img);
    Ok(group_regions(
        initial_regions(labeling, &features),
        &neighbor_pairs(labeling),
        img.len(),
    ))
}

/// Merge loop over prepared regions and adjacency.
pub fn group_regions(
    mut regions: Vec<RegionNode>,
    pairs: &BTreeSet<(usize, usize)>,
    image_size: usize,
) -> GroupingResult {
    let n = regions.len();
    let mut boxes: Vec<BoundingBox> = regions.iter().map(|r| r.bbox).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut alive = vec![true; n];
    let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut heap = BinaryHeap::with_capacity(pairs.len());
    for &(a, b) in pairs {
        adjacency[a].insert(b);
        adjacency[b].insert(a);
        heap.push(Candidate {
            sim: similarity(&regions[a], &regions[b], image_size),
            a,
            b,
        });
    }

    while let Some(Candidate { sim, a, b }) = heap.pop() {
        if !alive[a] || !alive[b] {
            continue;
        }
        let id = regions.len();
        let merged = regions[a].merge(&regions[b], id);
        boxes.push(merged.bbox);
        merges.push((a, b, sim));
        alive[a] = false;
        alive[b] = false;

        let mut around: BTreeSet<usize> = &adjacency[a] | &adjacency[b];
        around.remove(&a);
        around.remove(&b);
        for &k in &around {
            adjacency[k].remove(&a);
            adjacency[k].remove(&b);
            adjacency[k].insert(id);
            heap.push(Candidate {
                sim: similarity(&regions[k], &merged, image_size),
                a: k,
                b: id,
            });
        }
        adjacency[a].clear();
        adjacency[b].clear();
        adjacency.push(around);
        alive.push(true);
        regions.push(merged);
    }
    GroupingResult { boxes, merges }
}

/// Deduplicated proposal boxes for one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    pub image_id: String,
    pub mode: ModeTag,
    pub boxes: Vec<BoundingBox>,
}

/// Area descending, then `(x0, y0, x1, y1)` ascending.
pub fn proposal_order(a: &BoundingBox, b: &BoundingBox) -> Ordering {
    b.area().cmp(&a.area()).then_with(|| a.cmp(b))
}

/// Boxes recorded by one scale's segmentation and grouping, before filtering.
pub fn boxes_at_scale(img: &Image, mode: &SearchMode, scale: f64) -> Vec<BoundingBox> {
    let working = match mode.color_space {
        ColorSpace::Rgb => img.clone(),
        ColorSpace::Hsv => to_hsv(img),
    };
    let labeling = segment_graph(&working, &mode.segmentation_params(scale));
    grouping_pass(&working, &labeling)
        .expect("labeling built from the same image")
        .boxes
}

/// Unions proposals across the mode's scales, removes duplicates and boxes
/// below the minimum side, and sorts by [`proposal_order`].
pub fn propose(img: &Image, mode: &SearchMode, image_id: &str) -> ProposalSet {
    #[cfg(feature = "parallel")]
    let per_scale: Vec<Vec<BoundingBox>> = {
        use rayon::prelude::*;
        mode.scales
            .par_iter()
            .map(|&s| boxes_at_scale(img, mode, s))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_scale: Vec<Vec<BoundingBox>> = mode
        .scales
        .iter()
        .map(|&s| boxes_at_scale(img, mode, s))
        .collect();

    let unique: BTreeSet<BoundingBox> = per_scale
        .into_iter()
        .flatten()
        .filter(|b| b.width() >= MIN_PROPOSAL_SIDE && b.height() >= MIN_PROPOSAL_SIDE)
        .collect();
    let mut boxes: Vec<BoundingBox> = unique.into_iter().collect();
    boxes.sort_by(proposal_order);
    ProposalSet {
        image_id: image_id.to_string(),
        mode: mode.tag,
        boxes,
    }
}

#[derive(Serialize, Deserialize)]
struct ProposalLine {
    image_id: String,
    mode: ModeTag,
    #[serde(rename = "box")]
    bbox: BoundingBox,
}

/// One JSON object per box. Images without proposals produce no lines.
pub fn write_proposals<W: Write>(mut out: W, sets: &[ProposalSet]) -> std::io::Result<()> {
    for set in sets {
        for &bbox in &set.boxes {
            let line = ProposalLine {
                image_id: set.image_id.clone(),
                mode: set.mode,
                bbox,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Reads proposal lines, grouping consecutive-or-not lines by image in order of
/// first appearance.
pub fn read_proposals<R: BufRead>(input: R) -> Result<Vec<ProposalSet>, ProposalError> {
    let mut sets: Vec<ProposalSet> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ProposalLine =
            serde_json::from_str(&line).map_err(|e| ProposalError::MalformedProposals {
                line: n + 1,
                message: e.to_string(),
            })?;
        let slot = *index.entry(parsed.image_id.clone()).or_insert_with(|| {
            sets.push(ProposalSet {
                image_id: parsed.image_id.clone(),
                mode: parsed.mode,
                boxes: Vec::new(),
            });
            sets.len() - 1
        });
        sets[slot].boxes.push(parsed.bbox);
    }
    Ok(sets)
}
