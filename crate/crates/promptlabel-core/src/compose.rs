//! Pseudo-label composition: merging per-query class masks into one
//! per-pixel label map with deterministic conflict resolution.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

use crate::label::{ClassId, LabelMap, IGNORE};
use crate::mask::Mask;

/// A selected mask attributed to one class, with provenance for the
/// manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMask {
    pub class_id: ClassId,
    pub mask: Mask,
    pub score: f32,
    pub source: MaskSource,
}

/// Where a mask came from: the strategy that built the prompt and a query
/// id within the image.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MaskSource {
    pub strategy: String,
    pub query: String,
}

/// How pixels claimed by two or more distinct classes resolve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ConflictPolicy {
    /// Highest mask score wins; ties go to the smaller class index.
    #[default]
    Score,
    /// Conflicted pixels become the ignore value (255).
    Ignore,
    /// The mask with the smallest area wins; ties go to the smaller class
    /// index.
    Smallest,
}

/// What pixels covered by no mask become.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UnmaskedPolicy {
    /// Background (class 0), the VOC training convention.
    #[default]
    Background,
    /// The ignore value (255).
    Ignore,
}

/// A composed per-pixel pseudo label. `conflicts` counts pixels claimed by
/// at least two distinct classes before resolution; `coverage` is the
/// fraction of pixels assigned a real (non-background, non-ignore) class.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabel {
    pub label: LabelMap,
    pub coverage: f64,
    pub conflicts: usize,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Provenance {
    pub strategy: String,
    pub params_hash: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ComposeError {
    #[error("mask {index} is {got:?}, expected {expected:?}")]
    DimensionMismatch {
        index: usize,
        got: (u32, u32),
        expected: (u32, u32),
    },
}

/// Merge class masks into one label map. Pixels covered by exactly one
/// class get that class, uncovered pixels follow `unmasked`, and pixels
/// claimed by several distinct classes follow `policy`. An empty mask list
/// composes to the all-unmasked label.
pub fn compose(
    width: u32,
    height: u32,
    masks: &[ClassMask],
    policy: ConflictPolicy,
    unmasked: UnmaskedPolicy,
    provenance: Provenance,
) -> Result<PseudoLabel, ComposeError> {
    for (index, m) in masks.iter().enumerate() {
        if m.mask.width() != width || m.mask.height() != height {
            return Err(ComposeError::DimensionMismatch {
                index,
                got: (m.mask.width(), m.mask.height()),
                expected: (width, height),
            });
        }
    }

    let unmasked_value = match unmasked {
        UnmaskedPolicy::Background => 0,
        UnmaskedPolicy::Ignore => IGNORE,
    };
    let areas: Vec<usize> = masks.iter().map(|m| m.mask.area()).collect();

    let mut label = LabelMap::filled(width, height, unmasked_value);
    let mut conflicts = 0usize;
    let mut covered = 0usize;

    for y in 0..height {
        for x in 0..width {
            let mut winner: Option<usize> = None;
            let mut distinct: Option<ClassId> = None;
            let mut is_conflict = false;
            for (i, m) in masks.iter().enumerate() {
                if !m.mask.get(x, y) {
                    continue;
                }
                match distinct {
                    None => distinct = Some(m.class_id),
                    Some(c) if c != m.class_id => is_conflict = true,
                    _ => {}
                }
                let better = match winner {
                    None => true,
                    Some(w) => {
                        let prev = &masks[w];
                        match policy {
                            ConflictPolicy::Score => {
                                m.score > prev.score
                                    || (m.score == prev.score && m.class_id < prev.class_id)
                            }
                            ConflictPolicy::Smallest => {
                                areas[i] < areas[w]
                                    || (areas[i] == areas[w] && m.class_id < prev.class_id)
                            }
                            ConflictPolicy::Ignore => false,
                        }
                    }
                };
                if better {
                    winner = Some(i);
                }
            }
            match winner {
                None => {}
                Some(w) => {
                    if is_conflict {
                        conflicts += 1;
                        match policy {
                            ConflictPolicy::Ignore => label.set(x, y, IGNORE),
                            _ => {
                                label.set(x, y, masks[w].class_id);
                                covered += 1;
                            }
                        }
                    } else {
                        label.set(x, y, masks[w].class_id);
                        covered += 1;
                    }
                }
            }
        }
    }

    let total = width as usize * height as usize;
    let coverage = if total == 0 {
        0.0
    } else {
        covered as f64 / total as f64
    };
    Ok(PseudoLabel {
        label,
        coverage,
        conflicts,
        provenance,
    })
}

/// Union all masks sharing a class id; the merged score is the maximum of
/// the constituents and the source follows the highest-scoring one.
/// Output is ordered by class id.
pub fn merge_instances(masks: Vec<ClassMask>) -> Vec<ClassMask> {
    let mut merged: BTreeMap<ClassId, ClassMask> = BTreeMap::new();
    for m in masks {
        match merged.get_mut(&m.class_id) {
            None => {
                merged.insert(m.class_id, m);
            }
            Some(acc) => {
                acc.mask.or_assign(&m.mask);
                if m.score > acc.score {
                    acc.score = m.score;
                    acc.source = m.source;
                }
            }
        }
    }
    merged.into_values().collect()
}
