//! VOC-layout dataset ingestion and pseudo-label output.
//!
//! Expected tree:
//!
//! ```text
//! <root>/JPEGImages/<id>.jpg                image files (.png also accepted)
//! <root>/SegmentationClassAug/<id>.png      GT labels, 8-bit indexed
//! <root>/ImageSets/Segmentation/<split>.txt one image id per line
//! <root>/scribbles/<id>.png                 scribbles, 8-bit indexed, 255 = unlabeled
//! <root>/points/<split>.json                {id: [[x, y, class], ...]}
//! <root>/boxes/<split>.json                 {id: [[xmin, ymin, xmax, ymax, class], ...]}
//! <root>/image_labels/<split>.json          {id: [class, ...]} (optional)
//! <root>/cams/<id>_<class>.npyish           activation maps
//! ```
//!
//! `class` in the json sidecars is either a class index or a class name
//! from the active vocabulary. Boxes use exclusive maxima. Pseudo labels
//! are written as 8-bit indexed PNGs with the standard VOC palette.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use promptlabel_core::geom::{BoundingBox, Point};
use promptlabel_core::label::LabelMap;
use promptlabel_core::prompt::{AnnotationKind, WeakAnnotation};
use serde::Deserialize;

use crate::camio;
use crate::error::DatasetError;
use crate::voc::{voc_palette, ClassVocabulary};

/// Path helper for one dataset root.
#[derive(Clone, Debug)]
pub struct VocLayout {
    root: PathBuf,
}

impl VocLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn split_file(&self, split: &str) -> PathBuf {
        self.root
            .join("ImageSets")
            .join("Segmentation")
            .join(format!("{split}.txt"))
    }

    pub fn image_dir(&self) -> PathBuf {
        self.root.join("JPEGImages")
    }

    pub fn image_path(&self, id: &str) -> Option<PathBuf> {
        for ext in ["jpg", "png", "jpeg"] {
            let p = self.image_dir().join(format!("{id}.{ext}"));
            if p.is_file() {
                return Some(p);
            }
        }
        None
    }

    pub fn gt_path(&self, id: &str) -> PathBuf {
        self.root
            .join("SegmentationClassAug")
            .join(format!("{id}.png"))
    }

    pub fn scribble_path(&self, id: &str) -> PathBuf {
        self.root.join("scribbles").join(format!("{id}.png"))
    }

    pub fn points_file(&self, split: &str) -> PathBuf {
        self.root.join("points").join(format!("{split}.json"))
    }

    pub fn boxes_file(&self, split: &str) -> PathBuf {
        self.root.join("boxes").join(format!("{split}.json"))
    }

    pub fn image_labels_file(&self, split: &str) -> PathBuf {
        self.root.join("image_labels").join(format!("{split}.json"))
    }

    pub fn cam_dir(&self) -> PathBuf {
        self.root.join("cams")
    }
}

/// An ordered, duplicate-free list of image ids for one split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetIndex {
    pub split: String,
    pub ids: Vec<String>,
    pub root: PathBuf,
}

/// Read a split file: one id per non-empty line, order preserved.
/// Duplicate ids and ids without an image file are rejected by name.
pub fn load_dataset_index(root: &Path, split: &str) -> Result<DatasetIndex, DatasetError> {
    let layout = VocLayout::new(root);
    let path = layout.split_file(split);
    if !path.is_file() {
        return Err(DatasetError::MissingSplitFile { path });
    }
    let text = fs::read_to_string(&path).map_err(|source| DatasetError::Io {
        path: path.clone(),
        source,
    })?;
    let mut ids = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for line in text.lines() {
        let id = line.trim();
        if id.is_empty() {
            continue;
        }
        if !seen.insert(id.to_string()) {
            return Err(DatasetError::DuplicateId {
                id: id.to_string(),
                split: split.to_string(),
            });
        }
        if layout.image_path(id).is_none() {
            return Err(DatasetError::MissingImage {
                id: id.to_string(),
                dir: layout.image_dir(),
            });
        }
        ids.push(id.to_string());
    }
    Ok(DatasetIndex {
        split: split.to_string(),
        ids,
        root: root.to_path_buf(),
    })
}

/// Pixel dimensions of an image, read from the file header.
pub fn image_dims(layout: &VocLayout, id: &str) -> Result<(u32, u32), DatasetError> {
    let path = layout
        .image_path(id)
        .ok_or_else(|| DatasetError::MissingImage {
            id: id.to_string(),
            dir: layout.image_dir(),
        })?;
    image::image_dimensions(&path).map_err(|e| DatasetError::Png {
        path,
        message: e.to_string(),
    })
}

/// A class reference in a json sidecar: index or vocabulary name.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ClassRef {
    Index(u32),
    Name(String),
}

fn resolve_class(class: &ClassRef, vocab: &ClassVocabulary, id: &str) -> Result<u8, DatasetError> {
    match class {
        ClassRef::Index(i) => {
            if (*i as usize) < vocab.len() {
                Ok(*i as u8)
            } else {
                Err(DatasetError::ClassOutOfRange {
                    id: id.to_string(),
                    class: *i,
                    num_classes: vocab.len(),
                })
            }
        }
        ClassRef::Name(name) => {
            vocab
                .index_of(name)
                .ok_or_else(|| DatasetError::UnknownClassName {
                    name: name.clone(),
                    id: id.to_string(),
                })
        }
    }
}

/// One `[xmin, ymin, xmax, ymax, class]` sidecar entry.
type BoxEntry = (u32, u32, u32, u32, ClassRef);

fn read_json_sidecar<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| DatasetError::MalformedJson {
        path: path.to_path_buf(),
        source,
    })
}

/// Load the weak annotation of `kind` for one image and validate it against
/// the image dimensions and the vocabulary.
pub fn load_weak_annotation(
    layout: &VocLayout,
    split: &str,
    id: &str,
    kind: AnnotationKind,
    vocab: &ClassVocabulary,
    dims: (u32, u32),
) -> Result<WeakAnnotation, DatasetError> {
    let ann = match kind {
        AnnotationKind::Points => {
            let path = layout.points_file(split);
            if !path.is_file() {
                return Err(DatasetError::MissingAnnotation {
                    id: id.to_string(),
                    kind: "points",
                    path,
                });
            }
            let all: BTreeMap<String, Vec<(u32, u32, ClassRef)>> = read_json_sidecar(&path)?;
            let entries = all.get(id).ok_or_else(|| DatasetError::MissingAnnotation {
                id: id.to_string(),
                kind: "points",
                path: path.clone(),
            })?;
            let mut points = Vec::with_capacity(entries.len());
            for (x, y, class) in entries {
                points.push((Point::new(*x, *y), resolve_class(class, vocab, id)?));
            }
            WeakAnnotation::Points(points)
        }
        AnnotationKind::Boxes => {
            let path = layout.boxes_file(split);
            if !path.is_file() {
                return Err(DatasetError::MissingAnnotation {
                    id: id.to_string(),
                    kind: "boxes",
                    path,
                });
            }
            let all: BTreeMap<String, Vec<BoxEntry>> = read_json_sidecar(&path)?;
            let entries = all.get(id).ok_or_else(|| DatasetError::MissingAnnotation {
                id: id.to_string(),
                kind: "boxes",
                path: path.clone(),
            })?;
            let mut boxes = Vec::with_capacity(entries.len());
            for (x0, y0, x1, y1, class) in entries {
                let bbox = BoundingBox::new(*x0, *y0, *x1, *y1).map_err(|_| {
                    DatasetError::DegenerateBox {
                        id: id.to_string(),
                        coords: [*x0, *y0, *x1, *y1],
                    }
                })?;
                boxes.push((bbox, resolve_class(class, vocab, id)?));
            }
            WeakAnnotation::Boxes(boxes)
        }
        AnnotationKind::Scribbles => {
            let path = layout.scribble_path(id);
            if !path.is_file() {
                return Err(DatasetError::MissingAnnotation {
                    id: id.to_string(),
                    kind: "scribbles",
                    path,
                });
            }
            let map = load_label_png(&path)?;
            map.validate_classes(vocab.len())
                .map_err(|source| DatasetError::Label { path, source })?;
            WeakAnnotation::Scribbles(map)
        }
        AnnotationKind::ImageLabels => {
            let path = layout.image_labels_file(split);
            let classes: Vec<u8> = if path.is_file() {
                let all: BTreeMap<String, Vec<ClassRef>> = read_json_sidecar(&path)?;
                let entries = all.get(id).ok_or_else(|| DatasetError::MissingAnnotation {
                    id: id.to_string(),
                    kind: "image_labels",
                    path: path.clone(),
                })?;
                entries
                    .iter()
                    .map(|c| resolve_class(c, vocab, id))
                    .collect::<Result<Vec<_>, _>>()?
            } else {
                camio::classes_with_cams(&layout.cam_dir(), id)
            };
            let mut classes: Vec<u8> = classes.into_iter().filter(|&c| c != 0).collect();
            classes.sort_unstable();
            classes.dedup();
            if classes.is_empty() {
                return Err(DatasetError::NoImageLabels { id: id.to_string() });
            }
            WeakAnnotation::ImageLabels(classes)
        }
    };
    ann.validate(dims.0, dims.1)
        .map_err(|source| DatasetError::InvalidAnnotation {
            id: id.to_string(),
            source,
        })?;
    Ok(ann)
}

/// Ground-truth label map for one image.
pub fn load_gt_label(layout: &VocLayout, id: &str) -> Result<LabelMap, DatasetError> {
    load_label_png(&layout.gt_path(id))
}

/// Read an 8-bit indexed PNG as raw palette indices.
pub fn load_label_png(path: &Path) -> Result<LabelMap, DatasetError> {
    let file = fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let png_err = |e: png::DecodingError| DatasetError::Png {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut reader = decoder.read_info().map_err(png_err)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Indexed || info.bit_depth != png::BitDepth::Eight {
        return Err(DatasetError::NotIndexedPng {
            path: path.to_path_buf(),
        });
    }
    let buf_size = reader
        .output_buffer_size()
        .ok_or_else(|| DatasetError::Png {
            path: path.to_path_buf(),
            message: "image too large".into(),
        })?;
    let mut buf = vec![0u8; buf_size];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    let data = buf[..frame.buffer_size()].to_vec();
    LabelMap::from_raw(frame.width, frame.height, data).map_err(|source| DatasetError::Label {
        path: path.to_path_buf(),
        source,
    })
}

/// Write a label map as an 8-bit indexed PNG with the VOC palette.
/// The parent directory must already exist.
pub fn save_label_png(label: &LabelMap, path: &Path) -> Result<(), DatasetError> {
    let file = fs::File::create(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), label.width(), label.height());
    encoder.set_color(png::ColorType::Indexed);
    encoder.set_depth(png::BitDepth::Eight);
    let palette: Vec<u8> = voc_palette().iter().flatten().copied().collect();
    encoder.set_palette(palette);
    let png_err = |e: png::EncodingError| DatasetError::Png {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(label.data()).map_err(png_err)
}
