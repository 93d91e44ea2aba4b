//! Region-proposal logo detection and evaluation.
//!
//! The flow is: [`selective_search::propose`] generates class-agnostic boxes
//! from a [`segmentation`] of the image, a [`scoring::RegionScorer`] assigns
//! each box a 33-way class distribution, [`pipeline`] applies per-class
//! non-maximum suppression and the no-logo threshold, and [`metrics`] computes
//! average precision and threshold F1 curves over a [`dataset`] partition.

pub mod augment;
pub mod dataset;
pub mod imagecore;
pub mod metrics;
pub mod pipeline;
pub mod scoring;
pub mod segmentation;
pub mod selective_search;

pub use dataset::{Annotation, CorpusIndex, Label, Partition};
pub use imagecore::Image;
pub use metrics::{BoundingBox, Detection, EvalReport};
pub use scoring::{RegionScorer, ScoredRegion};
pub use selective_search::{ProposalSet, SearchMode};
