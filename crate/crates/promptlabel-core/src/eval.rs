//! Confusion-matrix mIoU evaluation.
//!
//! Rows index ground truth, columns index prediction. Pixels whose GT value
//! is 255 never enter the matrix; predicted 255 counts as background by
//! default (configurable to exclude the pixel instead). Classes absent from
//! both axes have an undefined IoU and are left out of the mean.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::label::{LabelMap, IGNORE};

/// How a predicted ignore value (255) is counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Pred255Mode {
    /// Count the pixel as predicted background.
    #[default]
    Background,
    /// Drop the pixel from the evaluation.
    Exclude,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("label maps are {gt:?} and {pred:?}, expected matching dimensions")]
    DimensionMismatch { gt: (u32, u32), pred: (u32, u32) },
    #[error("class {class} exceeds the {num_classes}-class matrix")]
    ClassOutOfRange { class: u8, num_classes: usize },
    #[error("confusion matrix is empty")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Add one image pair into the matrix.
    pub fn accumulate(
        &mut self,
        gt: &LabelMap,
        pred: &LabelMap,
        pred_255: Pred255Mode,
    ) -> Result<(), EvalError> {
        if gt.width() != pred.width() || gt.height() != pred.height() {
            return Err(EvalError::DimensionMismatch {
                gt: (gt.width(), gt.height()),
                pred: (pred.width(), pred.height()),
            });
        }
        for (&g, &p) in gt.data().iter().zip(pred.data().iter()) {
            if g == IGNORE {
                continue;
            }
            let p = match (p, pred_255) {
                (IGNORE, Pred255Mode::Background) => 0,
                (IGNORE, Pred255Mode::Exclude) => continue,
                (v, _) => v,
            };
            if g as usize >= self.num_classes {
                return Err(EvalError::ClassOutOfRange {
                    class: g,
                    num_classes: self.num_classes,
                });
            }
            if p as usize >= self.num_classes {
                return Err(EvalError::ClassOutOfRange {
                    class: p,
                    num_classes: self.num_classes,
                });
            }
            self.counts[g as usize * self.num_classes + p as usize] += 1;
        }
        Ok(())
    }

    /// Elementwise sum; per-image matrices reduce associatively.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.num_classes, other.num_classes);
        for (a, &b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += b;
        }
    }

    /// Per-class IoU and their mean. Classes with an empty row and column
    /// are undefined (`None`) and excluded; `include_background` controls
    /// whether class 0 joins the mean.
    pub fn miou(&self, include_background: bool) -> Result<EvaluationResult, EvalError> {
        if self.total() == 0 {
            return Err(EvalError::Empty);
        }
        let c = self.num_classes;
        let mut per_class_iou: Vec<Option<f64>> = Vec::with_capacity(c);
        let mut gt_pixels: Vec<u64> = Vec::with_capacity(c);
        for k in 0..c {
            let diag = self.get(k, k);
            let row: u64 = (0..c).map(|j| self.get(k, j)).sum();
            let col: u64 = (0..c).map(|i| self.get(i, k)).sum();
            gt_pixels.push(row);
            let denom = row + col - diag;
            per_class_iou.push(if denom == 0 {
                None
            } else {
                Some(diag as f64 / denom as f64)
            });
        }
        let mut sum = 0.0;
        let mut defined = 0usize;
        for (k, iou) in per_class_iou.iter().enumerate() {
            if k == 0 && !include_background {
                continue;
            }
            if let Some(v) = iou {
                sum += v;
                defined += 1;
            }
        }
        if defined == 0 {
            return Err(EvalError::Empty);
        }
        Ok(EvaluationResult {
            per_class_iou,
            miou: sum / defined as f64,
            evaluated_pixels: self.total(),
            gt_pixels,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationResult {
    /// IoU per class; `None` when the class appears in neither GT nor
    /// prediction.
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub evaluated_pixels: u64,
    /// GT pixel count per class (matrix row sums).
    pub gt_pixels: Vec<u64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng}; // dev-dependency std rand
    use rand_chacha::ChaCha8Rng;

    fn label_from(values: &[u8], width: u32) -> LabelMap {
        LabelMap::from_raw(width, values.len() as u32 / width, values.to_vec()).unwrap()
    }

    #[test]
    fn perfect_prediction_is_diagonal_and_miou_one() {
        let gt = label_from(&[0, 1, 1, 2, 2, 0], 3);
        let mut cm = ConfusionMatrix::new(3);
        cm.accumulate(&gt, &gt, Pred255Mode::Background).unwrap();
        for g in 0..3 {
            for p in 0..3 {
                if g != p {
                    assert_eq!(cm.get(g, p), 0);
                }
            }
        }
        assert_eq!(cm.miou(true).unwrap().miou, 1.0);
    }

    #[test]
    fn all_ignore_gt_leaves_matrix_empty() {
        let gt = LabelMap::filled(4, 4, IGNORE);
        let pred = LabelMap::new(4, 4);
        let mut cm = ConfusionMatrix::new(3);
        cm.accumulate(&gt, &pred, Pred255Mode::Background).unwrap();
        assert_eq!(cm.total(), 0);
        assert_eq!(cm.miou(true), Err(EvalError::Empty));
    }

    #[test]
    fn hand_computed_two_class_fixture() {
        // GT: 10 px of class 1, 6 px of class 0 (4x4 image)
        // pred: 5 of the class-1 pixels correct, 3 false positives on background
        let mut gt = vec![0u8; 16];
        gt[..10].fill(1);
        let mut pred = vec![0u8; 16];
        pred[..5].fill(1);
        pred[10..13].fill(1);
        let gt = label_from(&gt, 4);
        let pred = label_from(&pred, 4);
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&gt, &pred, Pred255Mode::Background).unwrap();
        let result = cm.miou(true).unwrap();
        // IoU_1 = 5 / (10 + 8 - 5)
        assert!((result.per_class_iou[1].unwrap() - 5.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_excluded_from_mean() {
        let gt = label_from(&[0, 0, 1, 1], 2);
        let pred = label_from(&[0, 0, 1, 1], 2);
        let mut cm = ConfusionMatrix::new(5);
        cm.accumulate(&gt, &pred, Pred255Mode::Background).unwrap();
        let result = cm.miou(true).unwrap();
        assert_eq!(result.per_class_iou[3], None);
        assert_eq!(result.miou, 1.0);
    }

    #[test]
    fn pred_255_modes() {
        let gt = label_from(&[1, 1], 2);
        let pred = label_from(&[IGNORE, 1], 2);
        let mut as_bg = ConfusionMatrix::new(2);
        as_bg
            .accumulate(&gt, &pred, Pred255Mode::Background)
            .unwrap();
        assert_eq!(as_bg.get(1, 0), 1);
        assert_eq!(as_bg.total(), 2);

        let mut excl = ConfusionMatrix::new(2);
        excl.accumulate(&gt, &pred, Pred255Mode::Exclude).unwrap();
        assert_eq!(excl.total(), 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let gt = LabelMap::new(3, 3);
        let pred = LabelMap::new(4, 3);
        let mut cm = ConfusionMatrix::new(2);
        assert!(matches!(
            cm.accumulate(&gt, &pred, Pred255Mode::Background),
            Err(EvalError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn random_pair_matches_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(400);
        for _ in 0..50 {
            let gen = |rng: &mut ChaCha8Rng| -> Vec<u8> {
                (0..64)
                    .map(|_| {
                        let v = rng.gen_range(0..22);
                        if v == 21 {
                            IGNORE
                        } else {
                            v as u8
                        }
                    })
                    .collect()
            };
            let gt = label_from(&gen(&mut rng), 8);
            let pred = label_from(&gen(&mut rng), 8);
            let mut cm = ConfusionMatrix::new(21);
            cm.accumulate(&gt, &pred, Pred255Mode::Background).unwrap();

            // independent double-loop count
            for g in 0..21u8 {
                for p in 0..21u8 {
                    let mut expected = 0u64;
                    for (&a, &b) in gt.data().iter().zip(pred.data().iter()) {
                        if a == IGNORE {
                            continue;
                        }
                        let b = if b == IGNORE { 0 } else { b };
                        if a == g && b == p {
                            expected += 1;
                        }
                    }
                    assert_eq!(cm.get(g as usize, p as usize), expected);
                }
            }
        }
    }

    #[test]
    fn accumulate_is_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gen = |rng: &mut ChaCha8Rng| -> LabelMap {
            LabelMap::from_raw(4, 4, (0..16).map(|_| rng.gen_range(0..3) as u8).collect()).unwrap()
        };
        let pairs: Vec<(LabelMap, LabelMap)> =
            (0..5).map(|_| (gen(&mut rng), gen(&mut rng))).collect();
        let mut whole = ConfusionMatrix::new(3);
        let mut merged = ConfusionMatrix::new(3);
        for (gt, pred) in &pairs {
            whole.accumulate(gt, pred, Pred255Mode::Background).unwrap();
            let mut one = ConfusionMatrix::new(3);
            one.accumulate(gt, pred, Pred255Mode::Background).unwrap();
            merged.merge(&one);
        }
        assert_eq!(whole, merged);
    }

    #[test]
    fn miou_invariant_under_class_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gt_raw: Vec<u8> = (0..36).map(|_| rng.gen_range(0..4) as u8).collect();
        let pred_raw: Vec<u8> = (0..36).map(|_| rng.gen_range(0..4) as u8).collect();
        // permutation of {0..3} fixing nothing in particular
        let perm = [2u8, 0, 3, 1];
        let apply = |v: &[u8]| -> Vec<u8> { v.iter().map(|&x| perm[x as usize]).collect() };

        let mut cm = ConfusionMatrix::new(4);
        cm.accumulate(
            &label_from(&gt_raw, 6),
            &label_from(&pred_raw, 6),
            Pred255Mode::Background,
        )
        .unwrap();
        let mut cm_perm = ConfusionMatrix::new(4);
        cm_perm
            .accumulate(
                &label_from(&apply(&gt_raw), 6),
                &label_from(&apply(&pred_raw), 6),
                Pred255Mode::Background,
            )
            .unwrap();
        let a = cm.miou(true).unwrap().miou;
        let b = cm_perm.miou(true).unwrap().miou;
        assert!((a - b).abs() < 1e-12);
    }
}
