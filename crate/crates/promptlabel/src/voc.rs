//! PASCAL VOC conventions: the 21-class vocabulary, the 256-entry label
//! palette, and class-list files for other vocabularies.

use std::fs;
use std::path::Path;

use crate::error::DatasetError;

/// The 21 VOC classes, index 0 = background.
pub const VOC_CLASSES: [&str; 21] = [
    "background",
    "aeroplane",
    "bicycle",
    "bird",
    "boat",
    "bottle",
    "bus",
    "car",
    "cat",
    "chair",
    "cow",
    "diningtable",
    "dog",
    "horse",
    "motorbike",
    "person",
    "pottedplant",
    "sheep",
    "sofa",
    "train",
    "tvmonitor",
];

/// The standard VOC colormap: bit `j` of channel `c` for index `i` comes
/// from bit `3j + c` of `i`, reversed. Index 255 lands on white-ish
/// (224, 224, 192), the usual ignore color.
#[allow(clippy::identity_op)]
pub fn voc_palette() -> [[u8; 3]; 256] {
    let mut palette = [[0u8; 3]; 256];
    for (i, entry) in palette.iter_mut().enumerate() {
        let mut c = i;
        let (mut r, mut g, mut b) = (0u8, 0u8, 0u8);
        for j in 0..8 {
            r |= (((c >> 0) & 1) as u8) << (7 - j);
            g |= (((c >> 1) & 1) as u8) << (7 - j);
            b |= (((c >> 2) & 1) as u8) << (7 - j);
            c >>= 3;
        }
        *entry = [r, g, b];
    }
    palette
}

/// Class vocabulary used across loading, evaluation, and the classifier
/// protocol. Defaults to VOC; a class-list file (one name per line,
/// index = line number, line 0 = background) swaps in another dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassVocabulary {
    names: Vec<String>,
}

impl Default for ClassVocabulary {
    fn default() -> Self {
        Self {
            names: VOC_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ClassVocabulary {
    pub fn from_file(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let names: Vec<String> = text
            .lines()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        if names.is_empty() || names.len() > 255 {
            return Err(DatasetError::BadClassList {
                path: path.to_path_buf(),
                count: names.len(),
            });
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, class: u8) -> Option<&str> {
        self.names.get(class as usize).map(|s| s.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<u8> {
        self.names.iter().position(|n| n == name).map(|i| i as u8)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}
