//! Core algorithms for turning weak annotations (image-level labels, points,
//! scribbles, bounding boxes) into prompts for a promptable segmenter,
//! composing the returned masks into per-pixel pseudo labels, and scoring
//! them with confusion-matrix mIoU.
//!
//! Everything in this crate is pure computation over in-memory arrays; it is
//! `no_std` + `alloc`. Dataset IO, file formats, the external-adapter wire
//! protocol, and the CLI live in the companion `promptlabel` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod ablation;
pub mod cam;
pub mod compose;
pub mod eval;
pub mod geom;
pub mod grid;
pub mod label;
pub mod mask;
pub mod oracle;
pub mod prompt;
pub mod rle;
pub mod seed;
pub mod segmenter;

pub use cam::{
    build_cam_prompts, confident_pixels, normalize_cam, sample_local_peaks, CamMode, ScoreMap,
};
pub use compose::{
    compose, merge_instances, ClassMask, ConflictPolicy, PseudoLabel, UnmaskedPolicy,
};
pub use eval::{ConfusionMatrix, EvaluationResult, Pred255Mode};
pub use geom::{BoundingBox, Point};
pub use grid::{generate_grid_points, MaskClassifier, MockClassifier};
pub use label::{ClassId, LabelMap, IGNORE, VOC_NUM_CLASSES};
pub use mask::Mask;
pub use oracle::{DegradedOracle, OracleSegmenter};
pub use prompt::{
    boxes_to_prompts, points_to_prompts, scribbles_to_prompts, subsample_scribble, AnnotationKind,
    PromptSet, WeakAnnotation,
};
pub use rle::Rle;
pub use segmenter::{
    refine, select_mask, ImageRef, MaskProposal, Segmenter, SegmenterError, SegmenterQuery,
    SelectionPolicy,
};
