//! Ground-truth-backed mock backends.
//!
//! [`OracleSegmenter`] answers queries from GT label maps: the rank-2 mask
//! is the union of the 4-connected equal-value GT regions containing a
//! positive point, minus regions containing a negative point. Box queries
//! return the non-background region with the largest overlap inside the
//! box, clipped to it. Rank 0 and 1 are the rank-2 mask eroded/dilated by
//! one pixel, so rank-0 ⊆ rank-2 ⊆ rank-1 always holds.
//!
//! [`DegradedOracle`] wraps the oracle and dilates its answers by an amount
//! that shrinks as the query carries more points (boxes are never
//! degraded), which lets tests reproduce the relative quality of the four
//! annotation regimes without a real model.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::label::LabelMap;
use crate::mask::{connected_components, Mask};
use crate::segmenter::{MaskProposal, Segmenter, SegmenterError, SegmenterQuery};

/// Deterministic backend that replays ground truth.
pub struct OracleSegmenter {
    gt: BTreeMap<String, LabelMap>,
}

impl OracleSegmenter {
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

    pub fn gt(&self, id: &str) -> Option<&LabelMap> {
        self.gt.get(id)
    }
}

impl Default for OracleSegmenter {
    fn default() -> Self {
        Self::new()
    }
}

impl Segmenter for OracleSegmenter {
    fn predict(&self, query: &SegmenterQuery) -> Result<Vec<MaskProposal>, SegmenterError> {
        let gt = self
            .gt
            .get(&query.image.id)
            .ok_or_else(|| SegmenterError::ImageNotFound(query.image.id.to_string()))?;
        oracle_predict(query, gt)
    }
}

/// The oracle rule table, usable directly against any GT map.
pub fn oracle_predict(
    query: &SegmenterQuery,
    gt: &LabelMap,
) -> Result<Vec<MaskProposal>, SegmenterError> {
    query.validate()?;
    if gt.width() != query.image.width || gt.height() != query.image.height {
        return Err(SegmenterError::InvalidQuery(alloc::format!(
            "ground truth is {}x{}, query says {}x{}",
            gt.width(),
            gt.height(),
            query.image.width,
            query.image.height
        )));
    }

    let comps = connected_components(gt);
    let mut conflict = false;

    let rank2 = if let Some(bbox) = &query.bbox {
        // largest-overlap object region (background and ignore excluded), clipped
        let overlaps = comps.overlaps_with_box(bbox);
        let mut best: Option<(u32, usize)> = None;
        for (id, &count) in overlaps.iter().enumerate() {
            let value = comps.value_of(id as u32);
            if value == 0 || value == crate::label::IGNORE || count == 0 {
                continue;
            }
            if best.is_none_or(|(_, c)| count > c) {
                best = Some((id as u32, count));
            }
        }
        match best {
            Some((id, _)) => {
                let mut selected = vec![false; comps.count()];
                selected[id as usize] = true;
                comps.mask_of(&selected).clipped_to(bbox)
            }
            None => Mask::new(gt.width(), gt.height()),
        }
    } else {
        let mut positive = vec![false; comps.count()];
        for p in &query.positives {
            positive[comps.comp_at(*p) as usize] = true;
        }
        let mut selected = positive.clone();
        for p in &query.negatives {
            let c = comps.comp_at(*p) as usize;
            if positive[c] {
                conflict = true;
            }
            selected[c] = false;
        }
        comps.mask_of(&selected)
    };

    Ok(ranked_proposals(rank2, conflict))
}

/// Standard proposal triple around a rank-2 mask.
fn ranked_proposals(rank2: Mask, conflict: bool) -> Vec<MaskProposal> {
    let rank0 = rank2.eroded(1);
    let rank1 = rank2.dilated(1);
    vec![
        MaskProposal {
            mask: rank0,
            score: 0.9,
            rank: 0,
            state: None,
            conflict,
        },
        MaskProposal {
            mask: rank1,
            score: 0.8,
            rank: 1,
            state: None,
            conflict,
        },
        MaskProposal {
            mask: rank2,
            score: 0.7,
            rank: 2,
            state: None,
            conflict,
        },
    ]
}

/// Oracle wrapper whose rank-2 answer is dilated by
/// `max_dilation + 1 - total_points` pixels (floored at zero). Box queries
/// pass through undegraded.
pub struct DegradedOracle {
    inner: OracleSegmenter,
    max_dilation: u32,
}

impl DegradedOracle {
    pub fn new(inner: OracleSegmenter, max_dilation: u32) -> Self {
        Self {
            inner,
            max_dilation,
        }
    }

    fn dilation_for(&self, query: &SegmenterQuery) -> u32 {
        if query.bbox.is_some() {
            return 0;
        }
        let total = (query.positives.len() + query.negatives.len()) as u32;
        (self.max_dilation + 1)
            .saturating_sub(total)
            .min(self.max_dilation)
    }
}

impl Segmenter for DegradedOracle {
    fn predict(&self, query: &SegmenterQuery) -> Result<Vec<MaskProposal>, SegmenterError> {
        let proposals = self.inner.predict(query)?;
        let k = self.dilation_for(query);
        if k == 0 {
            return Ok(proposals);
        }
        let rank2 = proposals
            .iter()
            .find(|p| p.rank == 2)
            .ok_or(SegmenterError::MissingRank(2))?;
        let conflict = rank2.conflict;
        Ok(ranked_proposals(rank2.mask.dilated(k), conflict))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{BoundingBox, Point};
    use crate::segmenter::ImageRef;

    fn scene() -> (ImageRef, LabelMap) {
        // 16x16: class 1 rectangle at (2..6, 2..6), class 2 at (9..14, 8..13)
        let mut gt = LabelMap::new(16, 16);
        for y in 2..6 {
            for x in 2..6 {
                gt.set(x, y, 1);
            }
        }
        for y in 8..13 {
            for x in 9..14 {
                gt.set(x, y, 2);
            }
        }
        (
            ImageRef {
                id: String::from("scene"),
                width: 16,
                height: 16,
            },
            gt,
        )
    }

    fn query(image: &ImageRef) -> SegmenterQuery {
        SegmenterQuery {
            image: image.clone(),
            positives: vec![],
            negatives: vec![],
            bbox: None,
            prev_state: None,
        }
    }

    fn gt_mask(gt: &LabelMap, class: u8) -> Mask {
        Mask::from_fn(gt.width(), gt.height(), |x, y| gt.get(x, y) == class)
    }

    #[test]
    fn positive_point_returns_exact_region() {
        let (image, gt) = scene();
        let mut q = query(&image);
        q.positives = vec![Point::new(3, 3)];
        let proposals = oracle_predict(&q, &gt).unwrap();
        let rank2 = proposals.iter().find(|p| p.rank == 2).unwrap();
        assert_eq!(rank2.mask, gt_mask(&gt, 1));
        assert!(!rank2.conflict);
    }

    #[test]
    fn tight_box_returns_that_object() {
        let (image, gt) = scene();
        let mut q = query(&image);
        q.bbox = Some(BoundingBox::new(9, 8, 14, 13).unwrap());
        let proposals = oracle_predict(&q, &gt).unwrap();
        let rank2 = proposals.iter().find(|p| p.rank == 2).unwrap();
        assert_eq!(rank2.mask, gt_mask(&gt, 2));
    }

    #[test]
    fn loose_box_still_prefers_object_over_background() {
        let (image, gt) = scene();
        let mut q = query(&image);
        q.bbox = Some(BoundingBox::new(7, 6, 16, 15).unwrap());
        let proposals = oracle_predict(&q, &gt).unwrap();
        let rank2 = proposals.iter().find(|p| p.rank == 2).unwrap();
        assert_eq!(rank2.mask, gt_mask(&gt, 2));
    }

    #[test]
    fn negative_in_positive_region_empties_and_flags() {
        let (image, gt) = scene();
        let mut q = query(&image);
        q.positives = vec![Point::new(3, 3)];
        q.negatives = vec![Point::new(4, 4)];
        let proposals = oracle_predict(&q, &gt).unwrap();
        let rank2 = proposals.iter().find(|p| p.rank == 2).unwrap();
        assert!(rank2.mask.is_blank());
        assert!(rank2.conflict);
    }

    #[test]
    fn negative_removes_other_region_only() {
        let (image, gt) = scene();
        let mut q = query(&image);
        q.positives = vec![Point::new(3, 3), Point::new(10, 9)];
        q.negatives = vec![Point::new(10, 10)];
        let proposals = oracle_predict(&q, &gt).unwrap();
        let rank2 = proposals.iter().find(|p| p.rank == 2).unwrap();
        assert_eq!(rank2.mask, gt_mask(&gt, 1));
        assert!(rank2.conflict); // class-2 region held both a positive and a negative
    }

    #[test]
    fn rank_nesting_invariant() {
        let (image, gt) = scene();
        let mut q = query(&image);
        q.positives = vec![Point::new(10, 9)];
        let proposals = oracle_predict(&q, &gt).unwrap();
        let m0 = &proposals.iter().find(|p| p.rank == 0).unwrap().mask;
        let m1 = &proposals.iter().find(|p| p.rank == 1).unwrap().mask;
        let m2 = &proposals.iter().find(|p| p.rank == 2).unwrap().mask;
        assert!(m0.is_subset_of(m2));
        assert!(m2.is_subset_of(m1));
    }

    #[test]
    fn determinism() {
        let (image, gt) = scene();
        let mut oracle = OracleSegmenter::new();
        oracle.insert("scene", gt);
        let mut q = query(&image);
        q.positives = vec![Point::new(3, 3)];
        let a = oracle.predict(&q).unwrap();
        let b = oracle.predict(&q).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_image_error() {
        let oracle = OracleSegmenter::new();
        let (image, _) = scene();
        let mut q = query(&image);
        q.positives = vec![Point::new(0, 0)];
        assert!(matches!(
            oracle.predict(&q),
            Err(SegmenterError::ImageNotFound(_))
        ));
    }

    #[test]
    fn degraded_dilation_shrinks_with_prompt_count() {
        let (image, gt) = scene();
        let mut oracle = OracleSegmenter::new();
        oracle.insert("scene", gt.clone());
        let degraded = DegradedOracle::new(oracle, 3);

        let mut one = query(&image);
        one.positives = vec![Point::new(3, 3)];
        let mut four = query(&image);
        four.positives = vec![
            Point::new(3, 3),
            Point::new(4, 3),
            Point::new(3, 4),
            Point::new(4, 4),
        ];

        let exact = gt_mask(&gt, 1);
        let m1 = crate::segmenter::select_mask(
            degraded.predict(&one).unwrap(),
            crate::segmenter::SelectionPolicy::Third,
        )
        .unwrap()
        .mask;
        let m4 = crate::segmenter::select_mask(
            degraded.predict(&four).unwrap(),
            crate::segmenter::SelectionPolicy::Third,
        )
        .unwrap()
        .mask;
        assert_eq!(m1, exact.dilated(3));
        assert_eq!(m4, exact);

        let mut boxed = query(&image);
        boxed.bbox = Some(BoundingBox::new(2, 2, 6, 6).unwrap());
        let mb = crate::segmenter::select_mask(
            degraded.predict(&boxed).unwrap(),
            crate::segmenter::SelectionPolicy::Third,
        )
        .unwrap()
        .mask;
        assert_eq!(mb, exact);
    }
}
