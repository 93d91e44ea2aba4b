use std::fmt;

use logodet_core::dataset::DatasetError;
use logodet_core::imagecore::ImageError;
use logodet_core::metrics::MetricsError;
use logodet_core::pipeline::PipelineError;
use logodet_core::scoring::ScoringError;
use logodet_core::selective_search::ProposalError;

/// A data error reported with exit status 2.
#[derive(Debug)]
pub struct Failure {
    pub name: &'static str,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.name, self.message)
    }
}

impl Failure {
    pub fn new(name: &'static str, message: impl Into<String>) -> Self {
        Self {
            name,
            message: message.into(),
        }
    }
}

macro_rules! failure_from {
    ($($t:ty => $f:ident),* $(,)?) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure { name: $f(&e), message: e.to_string() }
            }
        })*
    };
}

failure_from! {
    DatasetError => dataset_name,
    ImageError => image_name,
    MetricsError => metrics_name,
    PipelineError => pipeline_name,
    ScoringError => scoring_name,
    ProposalError => proposal_name,
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new("Io", e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::new("Serialization", e.to_string())
    }
}

// Wrapper variants report the innermost cause.

fn dataset_name(e: &DatasetError) -> &'static str {
    match e {
        DatasetError::MissingAnnotation(_) => "MissingAnnotation",
        DatasetError::InconsistentPartition { .. } => "InconsistentPartition",
        DatasetError::BadClassCount { .. } => "BadClassCount",
        DatasetError::DuplicateClass(_) => "DuplicateClass",
        DatasetError::UnknownClass { .. } => "UnknownClass",
        DatasetError::Malformed { .. } => "Malformed",
        DatasetError::BoxOutOfBounds { .. } => "BoxOutOfBounds",
        DatasetError::Io { .. } => "Io",
        DatasetError::Image { source, .. } => image_name(source),
    }
}

fn image_name(e: &ImageError) -> &'static str {
    match e {
        ImageError::MalformedImage(_) => "MalformedImage",
        ImageError::UnsupportedFormat => "UnsupportedFormat",
        ImageError::BadDimensions { .. } => "BadDimensions",
        ImageError::Encode(_) => "Encode",
    }
}

fn metrics_name(e: &MetricsError) -> &'static str {
    match e {
        MetricsError::MixedKeys => "MixedKeys",
        MetricsError::DuplicateImage(_) => "DuplicateImage",
        MetricsError::UnknownImage(_) => "UnknownImage",
        MetricsError::InvalidThresholds => "InvalidThresholds",
        MetricsError::InvalidBox { .. } => "InvalidBox",
    }
}

fn scoring_name(e: &ScoringError) -> &'static str {
    match e {
        ScoringError::MalformedScoreFile { .. } => "MalformedScoreFile",
        ScoringError::ScoreSumOutOfRange { .. } => "ScoreSumOutOfRange",
        ScoringError::UnknownClassCount { .. } => "UnknownClassCount",
        ScoringError::EmptyClass(_) => "EmptyClass",
        ScoringError::MissingImage(_) => "MissingImage",
        ScoringError::Dataset(d) => dataset_name(d),
        ScoringError::Io(_) => "Io",
    }
}

fn proposal_name(e: &ProposalError) -> &'static str {
    match e {
        ProposalError::DimensionMismatch { .. } => "DimensionMismatch",
        ProposalError::ScaleCount { .. } => "ScaleCount",
        ProposalError::MalformedProposals { .. } => "MalformedProposals",
        ProposalError::Io(_) => "Io",
    }
}

fn pipeline_name(e: &PipelineError) -> &'static str {
    match e {
        PipelineError::Scoring { source, .. } => scoring_name(source),
        PipelineError::Dataset { source, .. } => dataset_name(source),
        PipelineError::Metrics(m) => metrics_name(m),
        PipelineError::UnknownImage(_) => "UnknownImage",
    }
}
