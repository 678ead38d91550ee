//! Weak-annotation pseudo-label pipeline around a pluggable promptable
//! segmenter: VOC-layout dataset IO, prompt strategies, in-process oracle
//! and out-of-process adapter backends, pseudo-label composition, mIoU
//! evaluation, and the ablation sweep. Algorithms live in
//! `promptlabel-core`; this crate adds files, processes, and the CLI.

pub mod ablate;
pub mod adapter;
pub mod camio;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod protocol;
pub mod synth;
pub mod voc;

pub use config::PipelineConfig;
pub use error::PipelineError;
pub use pipeline::{run_generate, GenerateOutcome, Manifest};
