//! WebAssembly bindings for the browser demo. Images cross the boundary as
//! RGBA byte buffers (as returned by `CanvasRenderingContext2D.getImageData`)
//! and boxes as flat `[x0, y0, x1, y1, ...]` arrays.

use wasm_bindgen::prelude::*;

use logodet_core::metrics::{nms, BoundingBox, Detection};
use logodet_core::segmentation::{segment_graph, SegmentationParams};
use logodet_core::selective_search::{propose, ModeTag, SearchMode};
use logodet_core::Image;

/// A false-colour label map.
#[wasm_bindgen]
pub struct Segmentation {
    rgba: Vec<u8>,
    segments: usize,
}

#[wasm_bindgen]
impl Segmentation {
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn segments(&self) -> usize {
        self.segments
    }
}

pub fn segment_rgba(
    width: usize,
    height: usize,
    rgba: &[u8],
    k: f64,
    min_size: usize,
    sigma: f64,
) -> Result<Segmentation, String> {
    if k.is_nan() || k <= 0.0 || min_size == 0 || sigma.is_nan() || sigma < 0.0 {
        return Err("k and min_size must be positive, sigma non-negative".into());
    }
    let img = Image::from_rgba(width, height, rgba).map_err(|e| e.to_string())?;
    let labeling = segment_graph(&img, &SegmentationParams::new(k, min_size, sigma));
    Ok(Segmentation {
        rgba: labeling.render().to_rgba(),
        segments: labeling.segment_count(),
    })
}

pub fn propose_rgba(width: usize, height: usize, rgba: &[u8], mode: &str) -> Result<Vec<u32>, String> {
    let tag: ModeTag = mode.parse()?;
    let img = Image::from_rgba(width, height, rgba).map_err(|e| e.to_string())?;
    let set = propose(&img, &SearchMode::preset(tag), "canvas");
    Ok(set.boxes.iter().flat_map(|b| b.to_array()).collect())
}

/// Indices of the boxes kept by NMS, best first.
pub fn nms_indices(boxes: &[u32], scores: &[f64], iou_threshold: f64) -> Result<Vec<u32>, String> {
    if boxes.len() != scores.len() * 4 {
        return Err(format!("{} box coordinates for {} scores", boxes.len(), scores.len()));
    }
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err("IoU threshold must lie in [0, 1]".into());
    }
    let mut dets = Vec::with_capacity(scores.len());
    for (c, &score) in boxes.chunks_exact(4).zip(scores) {
        let bbox = BoundingBox::new(c[0], c[1], c[2], c[3]).map_err(|e| e.to_string())?;
        dets.push(Detection {
            image_id: String::new(),
            class_id: 0,
            score,
            bbox,
        });
    }
    let kept = nms(&dets, iou_threshold).map_err(|e| e.to_string())?;
    // recover input positions; duplicates of a kept box cannot survive NMS
    Ok(kept
        .iter()
        .map(|k| {
            dets.iter()
                .position(|d| d.bbox == k.bbox && d.score == k.score)
                .expect("kept detection comes from the input") as u32
        })
        .collect())
}

#[wasm_bindgen]
pub fn segment(
    width: usize,
    height: usize,
    rgba: &[u8],
    k: f64,
    min_size: usize,
    sigma: f64,
) -> Result<Segmentation, JsError> {
    segment_rgba(width, height, rgba, k, min_size, sigma).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = proposeBoxes)]
pub fn propose_boxes(width: usize, height: usize, rgba: &[u8], mode: &str) -> Result<Vec<u32>, JsError> {
    propose_rgba(width, height, rgba, mode).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = nmsKeep)]
pub fn nms_keep(boxes: &[u32], scores: &[f64], iou_threshold: f64) -> Result<Vec<u32>, JsError> {
    nms_indices(boxes, scores, iou_threshold).map_err(|e| JsError::new(&e))
}
