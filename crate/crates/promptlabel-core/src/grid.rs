//! Grid prompting with per-mask classification: probe the image at strided
//! points, deduplicate the returned masks, classify each survivor against
//! the image's target classes plus background, and compose the rest.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::compose::{
    compose, ClassMask, ComposeError, ConflictPolicy, MaskSource, Provenance, PseudoLabel,
    UnmaskedPolicy,
};
use crate::geom::Point;
use crate::label::{ClassId, LabelMap, IGNORE};
use crate::mask::Mask;
use crate::segmenter::{
    select_mask, ImageRef, Segmenter, SegmenterError, SegmenterQuery, SelectionPolicy,
};

/// Strided probe points: `(stride/2 + i*stride)` on both axes, row-major.
/// When the stride overshoots a dimension, one centered coordinate is used
/// on that axis so every image gets probed at least once.
pub fn generate_grid_points(width: u32, height: u32, stride: u32) -> Vec<Point> {
    assert!(stride >= 1, "stride must be at least 1");
    let axis = |dim: u32| -> Vec<u32> {
        let coords: Vec<u32> = (0..)
            .map(|i| stride / 2 + i * stride)
            .take_while(|&c| c < dim)
            .collect();
        if coords.is_empty() {
            vec![dim / 2]
        } else {
            coords
        }
    };
    let xs = axis(width);
    let ys = axis(height);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            out.push(Point::new(x, y));
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("classifier unavailable: {0}")]
    Unavailable(String),
    #[error("candidate set must be non-empty and contain background")]
    InvalidCandidates,
    #[error("classifier returned class {0} outside the candidate set")]
    OutOfCandidates(ClassId),
}

/// A mask classifier restricted to a candidate class set (which must
/// include background).
pub trait MaskClassifier: Sync {
    fn classify(
        &self,
        image_id: &str,
        mask: &Mask,
        candidates: &[ClassId],
    ) -> Result<(ClassId, f32), ClassifierError>;
}

/// Test classifier: majority ground-truth class under the mask, counted
/// over candidate classes only. Masks covering no candidate pixels come
/// back as background. Confidence is the majority share of counted pixels.
pub struct MockClassifier {
    gt: BTreeMap<String, LabelMap>,
}

impl MockClassifier {
    pub fn new() -> Self {
        Self {
            gt: BTreeMap::new(),
        }
    }

    pub fn with_map(gt: BTreeMap<String, LabelMap>) -> Self {
        Self { gt }
    }

    pub fn insert(&mut self, id: impl Into<String>, label: LabelMap) {
        self.gt.insert(id.into(), label);
    }
}

impl Default for MockClassifier {
    fn default() -> Self {
        Self::new()
    }
}

impl MaskClassifier for MockClassifier {
    fn classify(
        &self,
        image_id: &str,
        mask: &Mask,
        candidates: &[ClassId],
    ) -> Result<(ClassId, f32), ClassifierError> {
        if candidates.is_empty() || !candidates.contains(&0) {
            return Err(ClassifierError::InvalidCandidates);
        }
        let gt = self
            .gt
            .get(image_id)
            .ok_or_else(|| ClassifierError::Unavailable(image_id.to_string()))?;
        let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if !mask.get(x, y) {
                    continue;
                }
                let v = gt.get(x, y);
                if v != IGNORE && candidates.contains(&v) {
                    *counts.entry(v).or_insert(0) += 1;
                }
            }
        }
        let total: usize = counts.values().sum();
        if total == 0 {
            return Ok((0, 1.0));
        }
        // ties break toward the smaller class index via BTreeMap order
        let max_count = *counts.values().max().unwrap();
        let class = *counts.iter().find(|(_, &c)| c == max_count).unwrap().0;
        Ok((class, max_count as f32 / total as f32))
    }
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("image has no target classes")]
    NoTargetClasses,
    #[error(transparent)]
    Segmenter(#[from] SegmenterError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
}

#[derive(Clone, Copy, Debug)]
pub struct GridParams {
    pub stride: u32,
    /// Pairwise IoU at or above this collapses masks (higher backend score
    /// survives). `1.0` disables deduplication entirely.
    pub dedup_iou: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            stride: 32,
            dedup_iou: 0.9,
        }
    }
}

/// Greedy near-duplicate collapse, highest score first. Running it on its
/// own output changes nothing.
pub fn dedup_masks(mut masks: Vec<(Mask, f32)>, dedup_iou: f64) -> Vec<(Mask, f32)> {
    if dedup_iou >= 1.0 {
        return masks;
    }
    let mut order: Vec<usize> = (0..masks.len()).collect();
    order.sort_by(|&a, &b| {
        masks[b]
            .1
            .partial_cmp(&masks[a].1)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<(Mask, f32)> = Vec::new();
    for idx in order {
        let candidate = &masks[idx];
        if kept.iter().all(|(m, _)| m.iou(&candidate.0) < dedup_iou) {
            kept.push(candidate.clone());
        }
    }
    masks.clear();
    kept
}

/// Full grid pipeline for one image: probe, select, dedup, classify,
/// compose. Masks classified as background are dropped, so output classes
/// stay inside `image_labels ∪ {0, 255}`.
#[allow(clippy::too_many_arguments)]
pub fn grid_pipeline(
    image: &ImageRef,
    image_labels: &[ClassId],
    backend: &dyn Segmenter,
    classifier: &dyn MaskClassifier,
    params: &GridParams,
    selection: SelectionPolicy,
    conflict: ConflictPolicy,
    unmasked: UnmaskedPolicy,
    provenance: Provenance,
) -> Result<PseudoLabel, GridError> {
    if image_labels.is_empty() {
        return Err(GridError::NoTargetClasses);
    }
    let mut candidates: Vec<ClassId> = Vec::with_capacity(image_labels.len() + 1);
    candidates.push(0);
    candidates.extend(image_labels.iter().copied().filter(|&c| c != 0));

    let mut proposals: Vec<(Mask, f32)> = Vec::new();
    for point in generate_grid_points(image.width, image.height, params.stride) {
        let query = SegmenterQuery {
            image: image.clone(),
            positives: vec![point],
            negatives: Vec::new(),
            bbox: None,
            prev_state: None,
        };
        let selected = select_mask(backend.predict(&query)?, selection)?;
        if !selected.mask.is_blank() {
            proposals.push((selected.mask, selected.score));
        }
    }

    let surviving = dedup_masks(proposals, params.dedup_iou);

    let mut class_masks: Vec<ClassMask> = Vec::new();
    for (i, (mask, score)) in surviving.into_iter().enumerate() {
        let (class_id, _confidence) = classifier.classify(&image.id, &mask, &candidates)?;
        if !candidates.contains(&class_id) {
            return Err(GridError::Classifier(ClassifierError::OutOfCandidates(
                class_id,
            )));
        }
        if class_id == 0 {
            continue;
        }
        class_masks.push(ClassMask {
            class_id,
            mask,
            score,
            source: MaskSource {
                strategy: String::from("grid"),
                query: alloc::format!("grid-{i}"),
            },
        });
    }

    Ok(compose(
        image.width,
        image.height,
        &class_masks,
        conflict,
        unmasked,
        provenance,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::OracleSegmenter;

    #[test]
    fn grid_64_stride_32_gives_four_points() {
        let pts = generate_grid_points(64, 64, 32);
        assert_eq!(
            pts,
            vec![
                Point::new(16, 16),
                Point::new(48, 16),
                Point::new(16, 48),
                Point::new(48, 48)
            ]
        );
    }

    #[test]
    fn oversized_stride_gives_one_centered_point() {
        assert_eq!(generate_grid_points(10, 8, 100), vec![Point::new(5, 4)]);
    }

    #[test]
    fn stride_one_covers_every_pixel() {
        assert_eq!(generate_grid_points(7, 5, 1).len(), 35);
    }

    fn scene() -> (ImageRef, LabelMap) {
        let mut gt = LabelMap::new(32, 32);
        for y in 2..12 {
            for x in 2..12 {
                gt.set(x, y, 8); // dog
            }
        }
        for y in 18..30 {
            for x in 20..30 {
                gt.set(x, y, 15); // person
            }
        }
        (
            ImageRef {
                id: String::from("scene"),
                width: 32,
                height: 32,
            },
            gt,
        )
    }

    #[test]
    fn mock_classifier_examples() {
        let (_, gt) = scene();
        let mut clf = MockClassifier::new();
        clf.insert("scene", gt.clone());
        let candidates = vec![0, 8, 15];

        let dog = Mask::from_fn(32, 32, |x, y| gt.get(x, y) == 8);
        assert_eq!(clf.classify("scene", &dog, &candidates).unwrap(), (8, 1.0));

        let bg = Mask::from_fn(32, 32, |x, y| {
            (13..=18).contains(&x) && (1..=4).contains(&y)
        });
        assert_eq!(clf.classify("scene", &bg, &candidates).unwrap(), (0, 1.0));

        // 60 dog pixels vs 40 background pixels
        let mixed = Mask::from_fn(32, 32, |x, y| (2..12).contains(&y) && (6..16).contains(&x));
        let (class, conf) = clf.classify("scene", &mixed, &candidates).unwrap();
        assert_eq!(class, 8);
        assert!((conf - 0.6).abs() < 1e-6);
    }

    #[test]
    fn mock_classifier_rejects_bad_candidates() {
        let clf = MockClassifier::new();
        let mask = Mask::new(4, 4);
        assert!(matches!(
            clf.classify("x", &mask, &[]),
            Err(ClassifierError::InvalidCandidates)
        ));
        assert!(matches!(
            clf.classify("x", &mask, &[3, 5]),
            Err(ClassifierError::InvalidCandidates)
        ));
    }

    #[test]
    fn dedup_is_idempotent_and_keeps_higher_score() {
        let a = Mask::from_fn(8, 8, |x, y| x < 4 && y < 4);
        let mut b = a.clone();
        b.set(7, 7, true); // IoU 16/17 with a
        let c = Mask::from_fn(8, 8, |x, y| x >= 6 && y >= 6);
        let once = dedup_masks(vec![(a, 0.5), (b, 0.9), (c, 0.7)], 0.8);
        assert_eq!(once.len(), 2);
        assert_eq!(once[0].1, 0.9);
        let twice = dedup_masks(once.clone(), 0.8);
        assert_eq!(once, twice);
    }

    #[test]
    fn dedup_threshold_one_is_identity() {
        let a = Mask::from_fn(4, 4, |_, _| true);
        let masks = vec![(a.clone(), 0.9), (a, 0.1)];
        assert_eq!(dedup_masks(masks.clone(), 1.0), masks);
    }

    #[test]
    fn grid_pipeline_recovers_synthetic_scene() {
        let (image, gt) = scene();
        let mut backend = OracleSegmenter::new();
        backend.insert("scene", gt.clone());
        let mut clf = MockClassifier::new();
        clf.insert("scene", gt.clone());
        let out = grid_pipeline(
            &image,
            &[8, 15],
            &backend,
            &clf,
            &GridParams {
                stride: 4,
                dedup_iou: 0.9,
            },
            SelectionPolicy::Third,
            ConflictPolicy::Score,
            UnmaskedPolicy::Background,
            Provenance::default(),
        )
        .unwrap();
        assert_eq!(out.label, gt);
    }

    #[test]
    fn grid_output_stays_inside_target_classes() {
        let (image, gt) = scene();
        let mut backend = OracleSegmenter::new();
        backend.insert("scene", gt.clone());
        let mut clf = MockClassifier::new();
        clf.insert("scene", gt.clone());
        // person (15) is present in GT but not a target class
        let out = grid_pipeline(
            &image,
            &[8],
            &backend,
            &clf,
            &GridParams {
                stride: 4,
                dedup_iou: 0.9,
            },
            SelectionPolicy::Third,
            ConflictPolicy::Score,
            UnmaskedPolicy::Background,
            Provenance::default(),
        )
        .unwrap();
        for &v in out.label.data() {
            assert!(v == 0 || v == 8 || v == crate::label::IGNORE);
        }
        // the dog itself is still recovered
        for y in 2..12 {
            for x in 2..12 {
                assert_eq!(out.label.get(x, y), 8);
            }
        }
    }

    #[test]
    fn grid_pipeline_requires_target_classes() {
        let (image, gt) = scene();
        let mut backend = OracleSegmenter::new();
        backend.insert("scene", gt.clone());
        let clf = MockClassifier::with_map({
            let mut m = BTreeMap::new();
            m.insert(String::from("scene"), gt);
            m
        });
        assert!(matches!(
            grid_pipeline(
                &image,
                &[],
                &backend,
                &clf,
                &GridParams::default(),
                SelectionPolicy::Third,
                ConflictPolicy::Score,
                UnmaskedPolicy::Background,
                Provenance::default(),
            ),
            Err(GridError::NoTargetClasses)
        ));
    }
}
