//! Error types for dataset IO, file formats, adapters, and the pipeline,
//! plus the mapping onto process exit codes.

use std::path::PathBuf;

use promptlabel_core::grid::{ClassifierError, GridError};
use promptlabel_core::label::LabelError;
use promptlabel_core::SegmenterError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("split file not found: {path}")]
    MissingSplitFile { path: PathBuf },
    #[error("duplicate image id '{id}' in split '{split}'")]
    DuplicateId { id: String, split: String },
    #[error("image file for id '{id}' not found under {dir}")]
    MissingImage { id: String, dir: PathBuf },
    #[error("no {kind} annotation for image '{id}' ({path})")]
    MissingAnnotation {
        id: String,
        kind: &'static str,
        path: PathBuf,
    },
    #[error("malformed json in {path}: {source}")]
    MalformedJson {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("unknown class name '{name}' for image '{id}'")]
    UnknownClassName { name: String, id: String },
    #[error("class index {class} out of range for image '{id}' ({num_classes} classes)")]
    ClassOutOfRange {
        id: String,
        class: u32,
        num_classes: usize,
    },
    #[error("degenerate box {coords:?} for image '{id}'")]
    DegenerateBox { id: String, coords: [u32; 4] },
    #[error("annotation for image '{id}' is invalid: {source}")]
    InvalidAnnotation {
        id: String,
        source: promptlabel_core::prompt::PromptError,
    },
    #[error("{path} is not an 8-bit indexed png")]
    NotIndexedPng { path: PathBuf },
    #[error("png error on {path}: {message}")]
    Png { path: PathBuf, message: String },
    #[error("label map from {path} is invalid: {source}")]
    Label { path: PathBuf, source: LabelError },
    #[error("class-list file {path} has {count} usable lines (need 1..=255)")]
    BadClassList { path: PathBuf, count: usize },
    #[error("cam file {path}: {message}")]
    Cam { path: PathBuf, message: String },
    #[error("image '{id}' has no image-level labels (no sidecar json and no cam files)")]
    NoImageLabels { id: String },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("cannot reach adapter endpoint '{endpoint}': {message}")]
    Connect { endpoint: String, message: String },
    #[error("adapter io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed adapter message: {0}")]
    Malformed(String),
    #[error("adapter response id {got} does not match request id {expected}")]
    IdMismatch { got: u64, expected: u64 },
    #[error("adapter closed the connection")]
    Closed,
}

/// Top-level pipeline failure, classified for exit codes: configuration
/// problems exit 2, backend problems exit 3, partial per-image failures
/// exit 4.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Backend(#[from] SegmenterError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("{failed} of {total} images failed; see manifest")]
    Partial { failed: usize, total: usize },
    #[error(transparent)]
    Eval(#[from] promptlabel_core::eval::EvalError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl From<GridError> for PipelineError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::Segmenter(s) => PipelineError::Backend(s),
            GridError::Classifier(c) => PipelineError::Classifier(c),
            GridError::NoTargetClasses => {
                PipelineError::Config(ConfigError::Invalid("image has no target classes".into()))
            }
            GridError::Compose(c) => PipelineError::Config(ConfigError::Invalid(c.to_string())),
        }
    }
}

impl PipelineError {
    /// Process exit code: 0 success, 2 config error, 3 backend error,
    /// 4 partial failure (dataset and io problems count as config).
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Dataset(_) | PipelineError::Io { .. } => 2,
            PipelineError::Backend(_) | PipelineError::Classifier(_) => 3,
            PipelineError::Partial { .. } => 4,
            PipelineError::Eval(_) => 2,
        }
    }
}
