//! Point-prompt extraction from class activation maps.
//!
//! Two sampling schemes are supported: taking every confident pixel, or
//! keeping only confident pixels that dominate their Chebyshev neighborhood
//! (local peaks). Peaks of one class can serve as negative points for the
//! other classes present in the image.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use thiserror::Error;

use crate::geom::Point;
use crate::label::ClassId;
use crate::prompt::{make_schedule, PromptSet};

/// A per-class activation map normalized to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    class_id: ClassId,
    width: u32,
    height: u32,
    values: Vec<f32>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CamError {
    #[error("activation map is empty")]
    Empty,
    #[error("activation value at ({x}, {y}) is not finite")]
    NotFinite { x: u32, y: u32 },
    #[error("activation data length {len} does not match {width}x{height}")]
    LengthMismatch { len: usize, width: u32, height: u32 },
    #[error("score maps disagree on image size: {a:?} vs {b:?}")]
    SizeMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("cam threshold {0} outside (0, 1)")]
    BadThreshold(f32),
    #[error("peak radius must be at least 1")]
    BadRadius,
}

impl ScoreMap {
    pub fn class_id(&self) -> ClassId {
        self.class_id
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Min-max normalize a raw activation map to `[0, 1]`. A constant map
/// normalizes to all zeros. Intermediate arithmetic runs in `f64`, which
/// makes the result invariant under exact positive affine rescaling of the
/// input.
pub fn normalize_cam(
    class_id: ClassId,
    width: u32,
    height: u32,
    raw: &[f32],
) -> Result<ScoreMap, CamError> {
    if raw.is_empty() {
        return Err(CamError::Empty);
    }
    if raw.len() != width as usize * height as usize {
        return Err(CamError::LengthMismatch {
            len: raw.len(),
            width,
            height,
        });
    }
    for (i, &v) in raw.iter().enumerate() {
        if !v.is_finite() {
            return Err(CamError::NotFinite {
                x: (i % width as usize) as u32,
                y: (i / width as usize) as u32,
            });
        }
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in raw {
        let v = v as f64;
        if v < min {
            min = v;
        }
        if v > max {
            max = v;
        }
    }
    let span = max - min;
    let values = if span == 0.0 {
        raw.iter().map(|_| 0.0f32).collect()
    } else {
        raw.iter()
            .map(|&v| ((v as f64 - min) / span) as f32)
            .collect()
    };
    Ok(ScoreMap {
        class_id,
        width,
        height,
        values,
    })
}

/// All pixels with activation `>= threshold`, in row-major order.
pub fn confident_pixels(cam: &ScoreMap, threshold: f32) -> Vec<Point> {
    let mut out = Vec::new();
    for y in 0..cam.height {
        for x in 0..cam.width {
            if cam.get(x, y) >= threshold {
                out.push(Point::new(x, y));
            }
        }
    }
    out
}

/// Confident pixels that strictly dominate their `(2r+1)^2` Chebyshev
/// neighborhood. Equal-valued neighbors tie-break in row-major order: the
/// first pixel of a tied group is kept, later ones are suppressed.
pub fn sample_local_peaks(cam: &ScoreMap, threshold: f32, radius: u32) -> Vec<Point> {
    let mut out = Vec::new();
    let w = cam.width as i64;
    let h = cam.height as i64;
    let r = radius as i64;
    for y in 0..cam.height {
        for x in 0..cam.width {
            let v = cam.get(x, y);
            if v < threshold {
                continue;
            }
            let own_index = y as i64 * w + x as i64;
            let mut is_peak = true;
            'window: for ny in (y as i64 - r).max(0)..=(y as i64 + r).min(h - 1) {
                for nx in (x as i64 - r).max(0)..=(x as i64 + r).min(w - 1) {
                    let idx = ny * w + nx;
                    if idx == own_index {
                        continue;
                    }
                    let nv = cam.get(nx as u32, ny as u32);
                    if nv > v || (nv == v && idx < own_index) {
                        is_peak = false;
                        break 'window;
                    }
                }
            }
            if is_peak {
                out.push(Point::new(x, y));
            }
        }
    }
    out
}

/// Which sampling scheme feeds the prompt builder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CamMode {
    /// Every pixel above the confidence threshold becomes a positive point.
    AllConfident,
    /// Only local peaks become positive points.
    Peaks,
}

/// Tunables for CAM prompting. `batch_size` controls how many positives go
/// into each refinement step when iterative input is on.
#[derive(Clone, Copy, Debug)]
pub struct CamPromptParams {
    pub threshold: f32,
    pub peak_radius: u32,
    pub batch_size: usize,
}

impl Default for CamPromptParams {
    fn default() -> Self {
        Self {
            threshold: 0.7,
            peak_radius: 8,
            batch_size: 1,
        }
    }
}

impl CamPromptParams {
    pub fn validate(&self) -> Result<(), CamError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(CamError::BadThreshold(self.threshold));
        }
        if self.peak_radius < 1 {
            return Err(CamError::BadRadius);
        }
        Ok(())
    }
}

/// Prompt sets built from CAMs plus the classes whose sampling came up
/// empty (they get no prompt set and should be reported upstream).
#[derive(Clone, Debug, Default)]
pub struct CamPromptBuild {
    pub prompts: Vec<PromptSet>,
    pub dropped: Vec<ClassId>,
}

/// Build one prompt set per present class from its activation map. With
/// negatives enabled and at least two classes present, the negatives of a
/// class are the union of all other classes' positives; pixels that are
/// also the class's own positives are excluded so the sets stay disjoint
/// (class CAMs may overlap).
pub fn build_cam_prompts(
    cams: &[ScoreMap],
    mode: CamMode,
    use_negatives: bool,
    iterative: bool,
    params: &CamPromptParams,
) -> Result<CamPromptBuild, CamError> {
    params.validate()?;
    if let Some(first) = cams.first() {
        for cam in &cams[1..] {
            if cam.width != first.width || cam.height != first.height {
                return Err(CamError::SizeMismatch {
                    a: (first.width, first.height),
                    b: (cam.width, cam.height),
                });
            }
        }
    }

    let sampled: Vec<(ClassId, Vec<Point>)> = cams
        .iter()
        .map(|cam| {
            let points = match mode {
                CamMode::AllConfident => confident_pixels(cam, params.threshold),
                CamMode::Peaks => sample_local_peaks(cam, params.threshold, params.peak_radius),
            };
            (cam.class_id, points)
        })
        .collect();

    let mut build = CamPromptBuild::default();
    for (i, (class_id, positives)) in sampled.iter().enumerate() {
        if positives.is_empty() {
            build.dropped.push(*class_id);
            continue;
        }
        let negatives = if use_negatives {
            let own: BTreeSet<(u32, u32)> = positives.iter().map(|p| p.row_major_key()).collect();
            let mut union: BTreeSet<(u32, u32)> = BTreeSet::new();
            for (j, (_, other)) in sampled.iter().enumerate() {
                if j != i {
                    union.extend(other.iter().map(|p| p.row_major_key()));
                }
            }
            union
                .into_iter()
                .filter(|k| !own.contains(k))
                .map(|(y, x)| Point::new(x, y))
                .collect()
        } else {
            Vec::new()
        };
        build.prompts.push(PromptSet {
            class_id: *class_id,
            positives: positives.clone(),
            negatives,
            bbox: None,
            schedule: make_schedule(positives.len(), iterative, params.batch_size),
        });
    }
    Ok(build)
}
