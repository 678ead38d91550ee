//! Per-pixel class-index maps with the VOC ignore convention.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

/// Class index. 0 is background, 255 is reserved as the ignore value.
pub type ClassId = u8;

/// Pixels with this value are excluded from training and evaluation.
pub const IGNORE: u8 = 255;

/// PASCAL VOC vocabulary size including background.
pub const VOC_NUM_CLASSES: usize = 21;

/// A dense per-pixel class-index image. Values are class indices in
/// `0..num_classes` plus [`IGNORE`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("label data length {len} does not match {width}x{height}")]
    LengthMismatch { len: usize, width: u32, height: u32 },
    #[error("class index {class} at ({x}, {y}) is outside the {num_classes}-class vocabulary")]
    ClassOutOfRange {
        class: u8,
        x: u32,
        y: u32,
        num_classes: usize,
    },
}

impl LabelMap {
    /// All-background map.
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, LabelError> {
        if data.len() != width as usize * height as usize {
            return Err(LabelError::LengthMismatch {
                len: data.len(),
                width,
                height,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Every value must be `< num_classes` or [`IGNORE`].
    pub fn validate_classes(&self, num_classes: usize) -> Result<(), LabelError> {
        for (i, &v) in self.data.iter().enumerate() {
            if v != IGNORE && v as usize >= num_classes {
                return Err(LabelError::ClassOutOfRange {
                    class: v,
                    x: (i % self.width as usize) as u32,
                    y: (i / self.width as usize) as u32,
                    num_classes,
                });
            }
        }
        Ok(())
    }

    /// Distinct non-ignore values, ascending.
    pub fn values_present(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &v in &self.data {
            seen[v as usize] = true;
        }
        (0..255u8).filter(|&v| seen[v as usize]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_raw_checks_length() {
        assert!(LabelMap::from_raw(3, 2, vec![0; 6]).is_ok());
        assert!(matches!(
            LabelMap::from_raw(3, 2, vec![0; 5]),
            Err(LabelError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn validate_classes_names_offending_pixel() {
        let mut m = LabelMap::new(4, 4);
        m.set(2, 1, 30);
        let err = m.validate_classes(21).unwrap_err();
        assert_eq!(
            err,
            LabelError::ClassOutOfRange {
                class: 30,
                x: 2,
                y: 1,
                num_classes: 21
            }
        );
        m.set(2, 1, IGNORE);
        assert!(m.validate_classes(21).is_ok());
    }

    #[test]
    fn values_present_excludes_ignore() {
        let mut m = LabelMap::new(2, 2);
        m.set(0, 0, 3);
        m.set(1, 1, IGNORE);
        assert_eq!(m.values_present(), vec![0, 3]);
    }
}
