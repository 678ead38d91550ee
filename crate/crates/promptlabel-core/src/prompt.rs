//! Prompt construction from point, scribble, and box annotations.
//!
//! Every strategy emits [`PromptSet`]s: per-class (or per-box) bundles of
//! positive points, optional negative points taken from the other classes
//! present, and an iterative-input schedule. Background-class annotations
//! (class 0) never produce a prompt set of their own; they only contribute
//! negative points when negatives are enabled.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geom::{BoundingBox, Point};
use crate::label::{ClassId, LabelMap, IGNORE};
use crate::seed::derive_seed;

/// The four weak-supervision regimes. Exactly one applies per image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WeakAnnotation {
    /// Classes present in the image, background excluded.
    ImageLabels(Vec<ClassId>),
    /// One or more labeled pixels; class 0 marks background points.
    Points(Vec<(Point, ClassId)>),
    /// Sparse strokes as a label map where 255 = unlabeled.
    Scribbles(LabelMap),
    /// Per-instance tight boxes.
    Boxes(Vec<(BoundingBox, ClassId)>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnnotationKind {
    ImageLabels,
    Points,
    Scribbles,
    Boxes,
}

impl AnnotationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnnotationKind::ImageLabels => "image_labels",
            AnnotationKind::Points => "points",
            AnnotationKind::Scribbles => "scribbles",
            AnnotationKind::Boxes => "boxes",
        }
    }
}

impl WeakAnnotation {
    pub fn kind(&self) -> AnnotationKind {
        match self {
            WeakAnnotation::ImageLabels(_) => AnnotationKind::ImageLabels,
            WeakAnnotation::Points(_) => AnnotationKind::Points,
            WeakAnnotation::Scribbles(_) => AnnotationKind::Scribbles,
            WeakAnnotation::Boxes(_) => AnnotationKind::Boxes,
        }
    }

    /// Check coordinates and boxes against image bounds.
    pub fn validate(&self, width: u32, height: u32) -> Result<(), PromptError> {
        match self {
            WeakAnnotation::ImageLabels(_) => Ok(()),
            WeakAnnotation::Points(points) => {
                for (p, _) in points {
                    if !p.in_bounds(width, height) {
                        return Err(PromptError::PointOutOfBounds {
                            x: p.x,
                            y: p.y,
                            width,
                            height,
                        });
                    }
                }
                Ok(())
            }
            WeakAnnotation::Scribbles(map) => {
                if map.width() != width || map.height() != height {
                    return Err(PromptError::ScribbleSizeMismatch {
                        got: (map.width(), map.height()),
                        expected: (width, height),
                    });
                }
                Ok(())
            }
            WeakAnnotation::Boxes(boxes) => {
                for (b, _) in boxes {
                    b.check_fits(width, height)
                        .map_err(PromptError::InvalidBox)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("point ({x}, {y}) outside image bounds {width}x{height}")]
    PointOutOfBounds {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("scribble map is {got:?}, image is {expected:?}")]
    ScribbleSizeMismatch {
        got: (u32, u32),
        expected: (u32, u32),
    },
    #[error(transparent)]
    InvalidBox(crate::geom::BoxError),
    #[error("prompt set has neither positive points nor a box")]
    EmptyPromptSet,
    #[error("positive and negative sets share point ({x}, {y})")]
    PositiveNegativeOverlap { x: u32, y: u32 },
    #[error("schedule does not partition the positive list")]
    BadSchedule,
}

/// Everything sent to the segmenter for one (image, class-or-instance)
/// query: positives, optional negatives, optional box, and the batching of
/// positives for iterative refinement. `schedule` holds indices into
/// `positives` and always partitions it (it is empty only for box prompts,
/// which have no points).
#[derive(Clone, Debug, PartialEq)]
pub struct PromptSet {
    pub class_id: ClassId,
    pub positives: Vec<Point>,
    pub negatives: Vec<Point>,
    pub bbox: Option<BoundingBox>,
    pub schedule: Vec<Vec<usize>>,
}

impl PromptSet {
    pub fn validate(&self, width: u32, height: u32) -> Result<(), PromptError> {
        if self.positives.is_empty() && self.bbox.is_none() {
            return Err(PromptError::EmptyPromptSet);
        }
        for p in self.positives.iter().chain(self.negatives.iter()) {
            if !p.in_bounds(width, height) {
                return Err(PromptError::PointOutOfBounds {
                    x: p.x,
                    y: p.y,
                    width,
                    height,
                });
            }
        }
        if let Some(b) = &self.bbox {
            b.check_fits(width, height)
                .map_err(PromptError::InvalidBox)?;
        }
        let negatives: BTreeSet<(u32, u32)> =
            self.negatives.iter().map(|p| p.row_major_key()).collect();
        for p in &self.positives {
            if negatives.contains(&p.row_major_key()) {
                return Err(PromptError::PositiveNegativeOverlap { x: p.x, y: p.y });
            }
        }
        let mut seen = vec![false; self.positives.len()];
        let mut total = 0usize;
        for batch in &self.schedule {
            for &i in batch {
                if i >= seen.len() || seen[i] {
                    return Err(PromptError::BadSchedule);
                }
                seen[i] = true;
                total += 1;
            }
        }
        if total != self.positives.len() {
            return Err(PromptError::BadSchedule);
        }
        Ok(())
    }
}

/// Batches `0..n` for iterative input: singleton-by-default batches when
/// iterative, one batch with everything otherwise.
pub(crate) fn make_schedule(n: usize, iterative: bool, batch_size: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return Vec::new();
    }
    if !iterative {
        return vec![(0..n).collect()];
    }
    let b = batch_size.max(1);
    (0..n)
        .collect::<Vec<_>>()
        .chunks(b)
        .map(|c| c.to_vec())
        .collect()
}

/// Point annotations: one prompt set per non-background class, positives in
/// annotation order, negatives from the other classes when enabled.
pub fn points_to_prompts(
    points: &[(Point, ClassId)],
    iterative: bool,
    use_negatives: bool,
) -> Vec<PromptSet> {
    let mut by_class: BTreeMap<ClassId, Vec<Point>> = BTreeMap::new();
    for (p, c) in points {
        by_class.entry(*c).or_default().push(*p);
    }
    prompts_from_class_points(&by_class, iterative, use_negatives)
}

/// Uniform subsample without replacement: `max(1, ceil(fraction * n))`
/// pixels, returned in input order. `fraction = 1` is the identity;
/// empty input yields empty output.
pub fn subsample_scribble(pixels: &[Point], fraction: f64, seed: u64) -> Vec<Point> {
    assert!(
        fraction > 0.0 && fraction <= 1.0,
        "fraction must be in (0, 1]"
    );
    let n = pixels.len();
    if n == 0 {
        return Vec::new();
    }
    if fraction >= 1.0 {
        return pixels.to_vec();
    }
    let k = ceil_positive(fraction * n as f64).max(1).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, n, k).into_vec();
    indices.sort_unstable();
    indices.into_iter().map(|i| pixels[i]).collect()
}

/// `ceil` for non-negative finite values, usable without `std` float math.
fn ceil_positive(v: f64) -> usize {
    let t = v as usize;
    if (t as f64) < v {
        t + 1
    } else {
        t
    }
}

/// Scribble annotations: positives are a seeded subsample of the class's
/// stroke pixels, negatives are the (identically sampled) pixels of every
/// other labeled class. Sampling runs per connected stroke so every
/// instance keeps at least one pixel, then unions per class; stroke seeds
/// derive from the base seed, the class id, and the stroke's discovery
/// index, so a class's sample is the same whether it lands on the positive
/// or the negative side.
pub fn scribbles_to_prompts(
    scribbles: &LabelMap,
    fraction: f64,
    iterative: bool,
    use_negatives: bool,
    seed: u64,
) -> Vec<PromptSet> {
    let strokes = scribble_strokes_by_class(scribbles);
    let sampled: BTreeMap<ClassId, Vec<Point>> = strokes
        .into_iter()
        .map(|(c, strokes)| {
            let class_seed = derive_seed(seed, c as u64);
            let mut pixels = Vec::new();
            for (i, stroke) in strokes.iter().enumerate() {
                pixels.extend(subsample_scribble(
                    stroke,
                    fraction,
                    derive_seed(class_seed, i as u64),
                ));
            }
            (c, pixels)
        })
        .collect();
    prompts_from_class_points(&sampled, iterative, use_negatives)
}

/// Connected strokes (4-connectivity) grouped by class, strokes and their
/// pixels both in row-major discovery order.
pub fn scribble_strokes_by_class(scribbles: &LabelMap) -> BTreeMap<ClassId, Vec<Vec<Point>>> {
    let comps = crate::mask::connected_components(scribbles);
    let mut pixels_by_comp: BTreeMap<u32, Vec<Point>> = BTreeMap::new();
    for y in 0..scribbles.height() {
        for x in 0..scribbles.width() {
            if scribbles.get(x, y) != IGNORE {
                let comp = comps.comp_at(Point::new(x, y));
                pixels_by_comp
                    .entry(comp)
                    .or_default()
                    .push(Point::new(x, y));
            }
        }
    }
    let mut strokes: BTreeMap<ClassId, Vec<Vec<Point>>> = BTreeMap::new();
    for (comp, pixels) in pixels_by_comp {
        strokes
            .entry(comps.value_of(comp))
            .or_default()
            .push(pixels);
    }
    strokes
}

/// Stroke pixels grouped by class, row-major within each class.
/// 255 marks unlabeled pixels and is skipped.
pub fn scribble_pixels_by_class(scribbles: &LabelMap) -> BTreeMap<ClassId, Vec<Point>> {
    let mut by_class: BTreeMap<ClassId, Vec<Point>> = BTreeMap::new();
    for y in 0..scribbles.height() {
        for x in 0..scribbles.width() {
            let v = scribbles.get(x, y);
            if v != IGNORE {
                by_class.entry(v).or_default().push(Point::new(x, y));
            }
        }
    }
    by_class
}

/// Box annotations: one prompt set per box (multiple instances of a class
/// produce multiple sets), no points and no schedule attached.
pub fn boxes_to_prompts(boxes: &[(BoundingBox, ClassId)]) -> Vec<PromptSet> {
    boxes
        .iter()
        .map(|(b, c)| PromptSet {
            class_id: *c,
            positives: Vec::new(),
            negatives: Vec::new(),
            bbox: Some(*b),
            schedule: Vec::new(),
        })
        .collect()
}

/// Shared point-prompt assembly: one set per non-background class with
/// pixels, negatives = pixels of all other classes (background included).
fn prompts_from_class_points(
    by_class: &BTreeMap<ClassId, Vec<Point>>,
    iterative: bool,
    use_negatives: bool,
) -> Vec<PromptSet> {
    let mut out = Vec::new();
    for (&class_id, positives) in by_class {
        if class_id == 0 || positives.is_empty() {
            continue;
        }
        let negatives = if use_negatives {
            by_class
                .iter()
                .filter(|(&c, _)| c != class_id)
                .flat_map(|(_, pts)| pts.iter().copied())
                .collect()
        } else {
            Vec::new()
        };
        out.push(PromptSet {
            class_id,
            positives: positives.clone(),
            negatives,
            bbox: None,
            schedule: make_schedule(positives.len(), iterative, 1),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: u32, y: u32) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn single_point_single_class() {
        let sets = points_to_prompts(&[(pt(3, 4), 7)], false, true);
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].class_id, 7);
        assert_eq!(sets[0].positives, vec![pt(3, 4)]);
        assert!(sets[0].negatives.is_empty());
        assert_eq!(sets[0].schedule, vec![vec![0]]);
    }

    #[test]
    fn two_classes_two_points_each_cross_negatives() {
        let points = [(pt(1, 1), 3), (pt(2, 2), 5), (pt(3, 3), 3), (pt(4, 4), 5)];
        let sets = points_to_prompts(&points, false, true);
        assert_eq!(sets.len(), 2);
        for s in &sets {
            assert_eq!(s.positives.len(), 2);
            assert_eq!(s.negatives.len(), 2);
            s.validate(8, 8).unwrap();
        }
        let a = sets.iter().find(|s| s.class_id == 3).unwrap();
        assert_eq!(a.positives, vec![pt(1, 1), pt(3, 3)]);
        assert_eq!(a.negatives, vec![pt(2, 2), pt(4, 4)]);
    }

    #[test]
    fn iterative_points_schedule_is_singletons() {
        let points = [(pt(0, 0), 1), (pt(1, 0), 1), (pt(2, 0), 1)];
        let sets = points_to_prompts(&points, true, false);
        assert_eq!(sets[0].schedule, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn background_points_are_negative_only() {
        let points = [(pt(0, 0), 0), (pt(1, 0), 2)];
        let sets = points_to_prompts(&points, false, true);
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].class_id, 2);
        assert_eq!(sets[0].negatives, vec![pt(0, 0)]);
    }

    #[test]
    fn subsample_counts_and_membership() {
        let pixels: Vec<Point> = (0..100).map(|i| pt(i % 10, i / 10)).collect();
        let sampled = subsample_scribble(&pixels, 0.2, 7);
        assert_eq!(sampled.len(), 20);
        for p in &sampled {
            assert!(pixels.contains(p));
        }
        // input order is preserved
        let mut keys: Vec<usize> = sampled.iter().map(|p| p.index(10)).collect();
        let sorted = {
            let mut k = keys.clone();
            k.sort_unstable();
            k
        };
        assert_eq!(keys, sorted);
        keys.dedup();
        assert_eq!(keys.len(), 20);
    }

    #[test]
    fn subsample_fraction_one_is_identity() {
        let pixels = vec![pt(5, 5), pt(1, 2), pt(9, 0)];
        assert_eq!(subsample_scribble(&pixels, 1.0, 99), pixels);
    }

    #[test]
    fn subsample_seed_determinism() {
        let pixels: Vec<Point> = (0..50).map(|i| pt(i, 0)).collect();
        let a = subsample_scribble(&pixels, 0.3, 11);
        let b = subsample_scribble(&pixels, 0.3, 11);
        let c = subsample_scribble(&pixels, 0.3, 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn subsample_keeps_at_least_one() {
        let pixels = vec![pt(0, 0), pt(1, 0), pt(2, 0)];
        assert_eq!(subsample_scribble(&pixels, 0.01, 0).len(), 1);
        assert!(subsample_scribble(&[], 0.5, 0).is_empty());
    }

    #[test]
    fn scribbles_single_class_no_negatives() {
        let mut map = LabelMap::filled(8, 8, IGNORE);
        for x in 0..5 {
            map.set(x, 3, 4);
        }
        let sets = scribbles_to_prompts(&map, 0.2, false, false, 1);
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].class_id, 4);
        assert_eq!(sets[0].positives.len(), 1); // ceil(0.2 * 5)
        assert!(sets[0].negatives.is_empty());
    }

    #[test]
    fn scribbles_two_classes_negatives_match_other_sample() {
        let mut map = LabelMap::filled(10, 4, IGNORE);
        for x in 0..10 {
            map.set(x, 0, 1);
            map.set(x, 2, 2);
        }
        let seed = 33;
        let sets = scribbles_to_prompts(&map, 0.5, false, true, seed);
        assert_eq!(sets.len(), 2);
        let one = sets.iter().find(|s| s.class_id == 1).unwrap();
        let two = sets.iter().find(|s| s.class_id == 2).unwrap();
        // negatives of class 1 are exactly class 2's sampled positives
        assert_eq!(one.negatives, two.positives);
        assert_eq!(two.negatives, one.positives);
        // recomputing the sample with the same derived seeds reproduces it
        let row2: Vec<Point> = (0..10).map(|x| pt(x, 2)).collect();
        let expect = subsample_scribble(&row2, 0.5, derive_seed(derive_seed(seed, 2), 0));
        assert_eq!(one.negatives, expect);
    }

    #[test]
    fn every_stroke_of_a_class_keeps_a_pixel() {
        let mut map = LabelMap::filled(20, 5, IGNORE);
        for x in 0..8 {
            map.set(x, 0, 4);
        }
        for x in 10..18 {
            map.set(x, 4, 4);
        }
        let sets = scribbles_to_prompts(&map, 0.01, false, false, 7);
        assert_eq!(sets.len(), 1);
        let s = &sets[0];
        assert_eq!(s.positives.len(), 2);
        assert!(s.positives.iter().any(|p| p.y == 0));
        assert!(s.positives.iter().any(|p| p.y == 4));
    }

    #[test]
    fn all_unlabeled_scribble_yields_no_prompts() {
        let map = LabelMap::filled(6, 6, IGNORE);
        assert!(scribbles_to_prompts(&map, 0.2, true, true, 0).is_empty());
    }

    #[test]
    fn background_scribbles_only_feed_negatives() {
        let mut map = LabelMap::filled(6, 2, IGNORE);
        map.set(0, 0, 0);
        map.set(1, 0, 0);
        map.set(4, 1, 3);
        let sets = scribbles_to_prompts(&map, 1.0, false, true, 5);
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].class_id, 3);
        assert_eq!(sets[0].negatives, vec![pt(0, 0), pt(1, 0)]);
    }

    #[test]
    fn single_points_equal_length_one_scribbles() {
        // a point is the single-pixel special case of a scribble
        let points = [(pt(2, 3), 1u8), (pt(7, 5), 4)];
        let from_points = points_to_prompts(&points, true, true);

        let mut map = LabelMap::filled(10, 10, IGNORE);
        for (p, c) in &points {
            map.set(p.x, p.y, *c);
        }
        let from_scribbles = scribbles_to_prompts(&map, 1.0, true, true, 0);
        assert_eq!(from_points, from_scribbles);
    }

    #[test]
    fn boxes_one_prompt_per_instance() {
        let b1 = BoundingBox::new(0, 0, 4, 4).unwrap();
        let b2 = BoundingBox::new(5, 5, 9, 9).unwrap();
        let sets = boxes_to_prompts(&[(b1, 6), (b2, 6)]);
        assert_eq!(sets.len(), 2);
        assert!(sets.iter().all(|s| s.class_id == 6));
        assert!(sets.iter().all(|s| s.positives.is_empty()));
        assert!(sets.iter().all(|s| s.schedule.is_empty()));
        assert_eq!(sets[0].bbox, Some(b1));
        assert_eq!(sets[1].bbox, Some(b2));
    }

    #[test]
    fn overlapping_boxes_of_different_classes_both_emitted() {
        let b1 = BoundingBox::new(0, 0, 6, 6).unwrap();
        let b2 = BoundingBox::new(3, 3, 9, 9).unwrap();
        let sets = boxes_to_prompts(&[(b1, 1), (b2, 2)]);
        assert_eq!(sets.len(), 2);
        assert_ne!(sets[0].class_id, sets[1].class_id);
    }

    #[test]
    fn prompt_set_validation_catches_overlap_and_bad_schedule() {
        let mut s = PromptSet {
            class_id: 1,
            positives: vec![pt(1, 1)],
            negatives: vec![pt(1, 1)],
            bbox: None,
            schedule: vec![vec![0]],
        };
        assert!(matches!(
            s.validate(4, 4),
            Err(PromptError::PositiveNegativeOverlap { x: 1, y: 1 })
        ));
        s.negatives.clear();
        s.schedule = vec![vec![0], vec![0]];
        assert_eq!(s.validate(4, 4), Err(PromptError::BadSchedule));
    }
}
