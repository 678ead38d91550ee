//! The promptable-segmenter interface: queries, mask proposals, third-mask
//! selection, and the iterative refinement loop.
//!
//! A backend answers every query with exactly three ranked proposals. Rank
//! is backend ordering, not a score ordering; the default selection policy
//! takes the third mask (rank 2).

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

use crate::geom::{BoundingBox, Point};
use crate::mask::Mask;
use crate::prompt::PromptSet;

/// Image identity plus pixel dimensions, as the backend sees it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRef {
    pub id: String,
    pub width: u32,
    pub height: u32,
}

/// One backend call: spatial prompts plus the opaque refinement state from a
/// previous call, if any.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmenterQuery {
    pub image: ImageRef,
    pub positives: Vec<Point>,
    pub negatives: Vec<Point>,
    pub bbox: Option<BoundingBox>,
    pub prev_state: Option<Vec<u8>>,
}

impl SegmenterQuery {
    pub fn validate(&self) -> Result<(), SegmenterError> {
        if self.positives.is_empty() && self.bbox.is_none() {
            return Err(SegmenterError::InvalidQuery(String::from(
                "query needs at least one positive point or a box",
            )));
        }
        for p in self.positives.iter().chain(self.negatives.iter()) {
            if !p.in_bounds(self.image.width, self.image.height) {
                return Err(SegmenterError::InvalidQuery(alloc::format!(
                    "point ({}, {}) outside image {}x{}",
                    p.x,
                    p.y,
                    self.image.width,
                    self.image.height
                )));
            }
        }
        if let Some(b) = &self.bbox {
            if b.check_fits(self.image.width, self.image.height).is_err() {
                return Err(SegmenterError::InvalidQuery(String::from(
                    "box outside image bounds",
                )));
            }
        }
        Ok(())
    }
}

/// One of the three candidate masks a backend returns. `state` is opaque
/// refinement state passed back on the next call; `conflict` is a
/// diagnostic the oracle sets when positives and negatives hit the same
/// region.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskProposal {
    pub mask: Mask,
    pub score: f32,
    pub rank: u8,
    pub state: Option<Vec<u8>>,
    pub conflict: bool,
}

#[derive(Debug, Error)]
pub enum SegmenterError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("image not found: {0}")]
    ImageNotFound(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("backend returned {0} proposals, expected 3")]
    WrongProposalCount(usize),
    #[error("no proposal with rank {0}")]
    MissingRank(u8),
    #[error("duplicate proposal rank {0}")]
    DuplicateRank(u8),
    #[error("refinement step {index} failed: {source}")]
    Step {
        index: usize,
        source: Box<SegmenterError>,
    },
}

/// Which of the three proposals becomes the class mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SelectionPolicy {
    /// The third output mask (rank 2).
    #[default]
    Third,
    /// Highest confidence score.
    BestScore,
}

/// A promptable segmentation backend. `predict` must be safe to call from
/// multiple worker threads, either concurrently or by serializing
/// internally.
pub trait Segmenter: Sync {
    fn predict(&self, query: &SegmenterQuery) -> Result<Vec<MaskProposal>, SegmenterError>;
}

/// Pick one proposal out of exactly three with distinct ranks.
pub fn select_mask(
    proposals: Vec<MaskProposal>,
    policy: SelectionPolicy,
) -> Result<MaskProposal, SegmenterError> {
    if proposals.len() != 3 {
        return Err(SegmenterError::WrongProposalCount(proposals.len()));
    }
    let mut seen = [false; 3];
    for p in &proposals {
        let r = p.rank as usize;
        if r > 2 {
            return Err(SegmenterError::MissingRank(p.rank));
        }
        if seen[r] {
            return Err(SegmenterError::DuplicateRank(p.rank));
        }
        seen[r] = true;
    }
    match policy {
        SelectionPolicy::Third => proposals
            .into_iter()
            .find(|p| p.rank == 2)
            .ok_or(SegmenterError::MissingRank(2)),
        SelectionPolicy::BestScore => {
            // distinct ranks guarantee three proposals; ties keep the lower rank
            let mut best: Option<MaskProposal> = None;
            for p in proposals {
                let better = match &best {
                    None => true,
                    Some(b) => p.score > b.score || (p.score == b.score && p.rank < b.rank),
                };
                if better {
                    best = Some(p);
                }
            }
            best.ok_or(SegmenterError::MissingRank(0))
        }
    }
}

/// Run a prompt set's schedule against a backend: one predict per batch,
/// accumulating every previously sent positive point and feeding the
/// selected proposal's state forward. Returns the final selected mask.
pub fn refine(
    backend: &dyn Segmenter,
    image: &ImageRef,
    prompt: &PromptSet,
    policy: SelectionPolicy,
) -> Result<MaskProposal, SegmenterError> {
    let schedule: &[Vec<usize>] = &prompt.schedule;
    if schedule.is_empty() {
        return Err(SegmenterError::InvalidQuery(String::from(
            "refinement schedule is empty",
        )));
    }
    let mut sent: Vec<Point> = Vec::with_capacity(prompt.positives.len());
    let mut state: Option<Vec<u8>> = None;
    let mut selected: Option<MaskProposal> = None;
    for (index, batch) in schedule.iter().enumerate() {
        sent.extend(batch.iter().map(|&i| prompt.positives[i]));
        let query = SegmenterQuery {
            image: image.clone(),
            positives: sent.clone(),
            negatives: prompt.negatives.clone(),
            bbox: prompt.bbox,
            prev_state: state.take(),
        };
        let step = |e: SegmenterError| SegmenterError::Step {
            index,
            source: Box::new(e),
        };
        let proposals = backend.predict(&query).map_err(step)?;
        let chosen = select_mask(proposals, policy).map_err(step)?;
        state = chosen.state.clone();
        selected = Some(chosen);
    }
    Ok(selected.expect("non-empty schedule yields a selection"))
}
