//! Synthetic dataset generator: small scenes of rectangles and ellipses
//! with every annotation regime (GT labels, scribbles, points, boxes,
//! activation maps) written in the VOC layout. Fully determined by the
//! seed, so tests and demos are reproducible.
//!
//! The activation maps are deliberately imperfect: bump centers jitter off
//! the object centroid and roughly half the maps carry a spurious bump on
//! background, mimicking the coarse localization of real CAMs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use promptlabel_core::label::{LabelMap, IGNORE};
use promptlabel_core::seed::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::camio;
use crate::dataset::{save_label_png, VocLayout};
use crate::error::DatasetError;
use crate::voc::voc_palette;

#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub images: usize,
    pub width: u32,
    pub height: u32,
    /// Object classes are 1..=num_classes.
    pub num_classes: u8,
    pub min_objects: usize,
    pub max_objects: usize,
    pub seed: u64,
    pub split: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            images: 20,
            width: 64,
            height: 64,
            num_classes: 3,
            min_objects: 2,
            max_objects: 4,
            seed: 0,
            split: "train".into(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Rectangle,
    Ellipse,
}

#[derive(Clone, Copy, Debug)]
struct SynthObject {
    shape: Shape,
    cx: i64,
    cy: i64,
    half_w: i64,
    half_h: i64,
    class: u8,
}

impl SynthObject {
    fn covers(&self, x: u32, y: u32) -> bool {
        let dx = x as i64 - self.cx;
        let dy = y as i64 - self.cy;
        match self.shape {
            Shape::Rectangle => dx.abs() <= self.half_w && dy.abs() <= self.half_h,
            Shape::Ellipse => {
                let a = self.half_w as f64;
                let b = self.half_h as f64;
                (dx as f64 / a).powi(2) + (dy as f64 / b).powi(2) <= 1.0
            }
        }
    }

    /// Bounding box with exclusive maxima.
    fn bbox(&self) -> [u32; 4] {
        [
            (self.cx - self.half_w) as u32,
            (self.cy - self.half_h) as u32,
            (self.cx + self.half_w + 1) as u32,
            (self.cy + self.half_h + 1) as u32,
        ]
    }

    fn separated_from(&self, other: &SynthObject) -> bool {
        // inflated-bbox separation keeps GT components disjoint
        let a = self.bbox();
        let b = other.bbox();
        a[2] + 2 <= b[0] || b[2] + 2 <= a[0] || a[3] + 2 <= b[1] || b[3] + 2 <= a[1]
    }
}

/// Write a complete synthetic dataset under `root` and return its image
/// ids in split order.
pub fn generate_synthetic_dataset(
    spec: &SynthSpec,
    root: &Path,
) -> Result<Vec<String>, DatasetError> {
    let layout = VocLayout::new(root);
    let mkdir = |p: &Path| -> Result<(), DatasetError> {
        fs::create_dir_all(p).map_err(|source| DatasetError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    mkdir(&layout.image_dir())?;
    mkdir(&root.join("SegmentationClassAug"))?;
    mkdir(&root.join("scribbles"))?;
    mkdir(&root.join("points"))?;
    mkdir(&root.join("boxes"))?;
    mkdir(&layout.cam_dir())?;
    mkdir(layout.split_file(&spec.split).parent().unwrap())?;

    let mut ids = Vec::with_capacity(spec.images);
    let mut points_json = BTreeMap::new();
    let mut boxes_json = BTreeMap::new();

    for i in 0..spec.images {
        let id = format!("synth_{i:04}");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, i as u64));
        let objects = place_objects(spec, &mut rng);

        let gt = render_label(spec, &objects, 0);
        save_label_png(&gt, &layout.gt_path(&id))?;

        let scribbles = render_scribbles(spec, &objects);
        save_label_png(&scribbles, &layout.scribble_path(&id))?;

        write_image(spec, &gt, &layout, &id)?;

        let points: Vec<serde_json::Value> = objects
            .iter()
            .map(|o| json!([o.cx as u32, o.cy as u32, o.class]))
            .collect();
        points_json.insert(id.clone(), serde_json::Value::Array(points));

        let boxes: Vec<serde_json::Value> = objects
            .iter()
            .map(|o| {
                let b = o.bbox();
                json!([b[0], b[1], b[2], b[3], o.class])
            })
            .collect();
        boxes_json.insert(id.clone(), serde_json::Value::Array(boxes));

        write_cams(spec, &objects, &layout, &id, &mut rng)?;

        ids.push(id);
    }

    let write_json = |path: &Path, value: &BTreeMap<String, serde_json::Value>| {
        fs::write(path, serde_json::to_string_pretty(value).unwrap()).map_err(|source| {
            DatasetError::Io {
                path: path.to_path_buf(),
                source,
            }
        })
    };
    write_json(&layout.points_file(&spec.split), &points_json)?;
    write_json(&layout.boxes_file(&spec.split), &boxes_json)?;

    let split_path = layout.split_file(&spec.split);
    fs::write(&split_path, ids.join("\n") + "\n").map_err(|source| DatasetError::Io {
        path: split_path.clone(),
        source,
    })?;
    Ok(ids)
}

fn place_objects(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<SynthObject> {
    let target = rng.gen_range(spec.min_objects..=spec.max_objects);
    let mut objects: Vec<SynthObject> = Vec::new();
    let mut attempts = 0;
    while objects.len() < target && attempts < 200 {
        attempts += 1;
        let half_w = rng.gen_range(5..=9i64);
        let half_h = rng.gen_range(5..=9i64);
        if spec.width as i64 <= 2 * (half_w + 2) || spec.height as i64 <= 2 * (half_h + 2) {
            continue;
        }
        let cx = rng.gen_range(half_w + 2..spec.width as i64 - half_w - 2);
        let cy = rng.gen_range(half_h + 2..spec.height as i64 - half_h - 2);
        let candidate = SynthObject {
            shape: if rng.gen_bool(0.5) {
                Shape::Rectangle
            } else {
                Shape::Ellipse
            },
            cx,
            cy,
            half_w,
            half_h,
            class: rng.gen_range(1..=spec.num_classes),
        };
        if objects.iter().all(|o| o.separated_from(&candidate)) {
            objects.push(candidate);
        }
    }
    objects
}

fn render_label(spec: &SynthSpec, objects: &[SynthObject], background: u8) -> LabelMap {
    let mut label = LabelMap::filled(spec.width, spec.height, background);
    for y in 0..spec.height {
        for x in 0..spec.width {
            for o in objects {
                if o.covers(x, y) {
                    label.set(x, y, o.class);
                    break;
                }
            }
        }
    }
    label
}

/// One horizontal stroke through each object's widest row, inset one pixel
/// from the object boundary.
fn render_scribbles(spec: &SynthSpec, objects: &[SynthObject]) -> LabelMap {
    let mut scribbles = LabelMap::filled(spec.width, spec.height, IGNORE);
    for o in objects {
        let y = o.cy as u32;
        let covered: Vec<u32> = (0..spec.width).filter(|&x| o.covers(x, y)).collect();
        if covered.len() > 4 {
            for &x in &covered[1..covered.len() - 1] {
                scribbles.set(x, y, o.class);
            }
        } else {
            for &x in &covered {
                scribbles.set(x, y, o.class);
            }
        }
    }
    scribbles
}

fn write_image(
    spec: &SynthSpec,
    gt: &LabelMap,
    layout: &VocLayout,
    id: &str,
) -> Result<(), DatasetError> {
    let palette = voc_palette();
    let mut img = image::RgbImage::new(spec.width, spec.height);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let [r, g, b] = palette[gt.get(x, y) as usize];
            img.put_pixel(x, y, image::Rgb([r, g, b]));
        }
    }
    let path = layout.image_dir().join(format!("{id}.jpg"));
    img.save(&path).map_err(|e| DatasetError::Png {
        path,
        message: e.to_string(),
    })
}

fn write_cams(
    spec: &SynthSpec,
    objects: &[SynthObject],
    layout: &VocLayout,
    id: &str,
    rng: &mut ChaCha8Rng,
) -> Result<(), DatasetError> {
    let mut classes: Vec<u8> = objects.iter().map(|o| o.class).collect();
    classes.sort_unstable();
    classes.dedup();
    for class in classes {
        let mut raw = vec![0.0f32; (spec.width * spec.height) as usize];
        for o in objects.iter().filter(|o| o.class == class) {
            let jx = rng.gen_range(-4..=4i64);
            let jy = rng.gen_range(-4..=4i64);
            let cx = (o.cx + jx).clamp(0, spec.width as i64 - 1) as f64;
            let cy = (o.cy + jy).clamp(0, spec.height as i64 - 1) as f64;
            let sigma = 0.5 * o.half_w.min(o.half_h) as f64 + 1.0;
            add_bump(&mut raw, spec.width, cx, cy, sigma, 1.0);
        }
        // spurious background activation on roughly half of the maps
        if rng.gen_bool(0.5) {
            for _ in 0..30 {
                let x = rng.gen_range(0..spec.width) as i64;
                let y = rng.gen_range(0..spec.height) as i64;
                let near_object = objects.iter().any(|o| {
                    let b = o.bbox();
                    x >= b[0] as i64 - 8
                        && x < b[2] as i64 + 8
                        && y >= b[1] as i64 - 8
                        && y < b[3] as i64 + 8
                });
                if !near_object {
                    add_bump(&mut raw, spec.width, x as f64, y as f64, 2.5, 0.85);
                    break;
                }
            }
        }
        camio::write_cam(
            &camio::cam_path(&layout.cam_dir(), id, class),
            spec.width,
            spec.height,
            &raw,
        )?;
    }
    Ok(())
}

fn add_bump(raw: &mut [f32], width: u32, cx: f64, cy: f64, sigma: f64, amplitude: f64) {
    for (i, v) in raw.iter_mut().enumerate() {
        let x = (i % width as usize) as f64;
        let y = (i / width as usize) as f64;
        let d2 = (x - cx).powi(2) + (y - cy).powi(2);
        *v += (amplitude * (-d2 / (2.0 * sigma * sigma)).exp()) as f32;
    }
}

/// Ground-truth maps for a generated dataset, keyed by id. Backing store
/// for the oracle backend and the mock classifier in tests.
pub fn load_gt_maps(
    root: &Path,
    ids: &[String],
) -> Result<BTreeMap<String, LabelMap>, DatasetError> {
    let layout = VocLayout::new(root);
    let mut maps = BTreeMap::new();
    for id in ids {
        maps.insert(id.clone(), crate::dataset::load_gt_label(&layout, id)?);
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_dataset_index;

    #[test]
    fn dataset_is_complete_and_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            images: 3,
            ..Default::default()
        };
        let ids_a = generate_synthetic_dataset(&spec, dir_a.path()).unwrap();
        let ids_b = generate_synthetic_dataset(&spec, dir_b.path()).unwrap();
        assert_eq!(ids_a, ids_b);
        assert_eq!(ids_a.len(), 3);

        let index = load_dataset_index(dir_a.path(), "train").unwrap();
        assert_eq!(index.ids, ids_a);

        for id in &ids_a {
            let gt_a = crate::dataset::load_gt_label(&VocLayout::new(dir_a.path()), id).unwrap();
            let gt_b = crate::dataset::load_gt_label(&VocLayout::new(dir_b.path()), id).unwrap();
            assert_eq!(gt_a, gt_b);
            // at least two objects somewhere
            assert!(gt_a.values_present().len() >= 2);
        }
    }

    #[test]
    fn scribbles_lie_inside_their_objects() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            images: 5,
            seed: 9,
            ..Default::default()
        };
        let ids = generate_synthetic_dataset(&spec, dir.path()).unwrap();
        let layout = VocLayout::new(dir.path());
        for id in &ids {
            let gt = crate::dataset::load_gt_label(&layout, id).unwrap();
            let scribbles = crate::dataset::load_label_png(&layout.scribble_path(id)).unwrap();
            let mut stroke_pixels = 0;
            for y in 0..gt.height() {
                for x in 0..gt.width() {
                    let s = scribbles.get(x, y);
                    if s != IGNORE {
                        stroke_pixels += 1;
                        assert_eq!(s, gt.get(x, y), "scribble leaves object at ({x},{y})");
                    }
                }
            }
            assert!(stroke_pixels > 0);
        }
    }

    #[test]
    fn every_object_class_has_a_cam() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            images: 4,
            seed: 2,
            ..Default::default()
        };
        let ids = generate_synthetic_dataset(&spec, dir.path()).unwrap();
        let layout = VocLayout::new(dir.path());
        for id in &ids {
            let gt = crate::dataset::load_gt_label(&layout, id).unwrap();
            let classes: Vec<u8> = gt
                .values_present()
                .into_iter()
                .filter(|&c| c != 0)
                .collect();
            assert_eq!(camio::classes_with_cams(&layout.cam_dir(), id), classes);
        }
    }
}
