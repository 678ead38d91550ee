//! The `.npyish` activation-map file format.
//!
//! Byte layout, all little-endian:
//!
//! ```text
//! offset 0   magic  b"CAM1"
//! offset 4   u32    height
//! offset 8   u32    width
//! offset 12  f32 x (height * width)   row-major activation values
//! ```
//!
//! One file per (image, class): `cams/<id>_<class>.npyish` with `<class>`
//! the decimal class index.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::DatasetError;

pub const CAM_MAGIC: [u8; 4] = *b"CAM1";
pub const CAM_EXTENSION: &str = "npyish";

pub fn cam_file_name(id: &str, class: u8) -> String {
    format!("{id}_{class}.{CAM_EXTENSION}")
}

pub fn write_cam(path: &Path, width: u32, height: u32, values: &[f32]) -> Result<(), DatasetError> {
    assert_eq!(values.len(), width as usize * height as usize);
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut bytes = Vec::with_capacity(12 + values.len() * 4);
    bytes.extend_from_slice(&CAM_MAGIC);
    bytes.extend_from_slice(&height.to_le_bytes());
    bytes.extend_from_slice(&width.to_le_bytes());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&bytes).map_err(io_err)
}

pub fn read_cam(path: &Path) -> Result<(u32, u32, Vec<f32>), DatasetError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let bad = |message: &str| DatasetError::Cam {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    if bytes.len() < 12 {
        return Err(bad("file shorter than the 12-byte header"));
    }
    if bytes[0..4] != CAM_MAGIC {
        return Err(bad("bad magic, expected CAM1"));
    }
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let n = width as usize * height as usize;
    if bytes.len() != 12 + n * 4 {
        return Err(bad(&format!(
            "payload is {} bytes, expected {} for {}x{}",
            bytes.len() - 12,
            n * 4,
            width,
            height
        )));
    }
    let values = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((width, height, values))
}

/// Classes that have a cam file for `id` in `dir`, ascending.
pub fn classes_with_cams(dir: &Path, id: &str) -> Vec<u8> {
    let mut classes: Vec<u8> = (0u8..255)
        .filter(|&c| dir.join(cam_file_name(id, c)).is_file())
        .collect();
    classes.sort_unstable();
    classes
}

pub fn cam_path(dir: &Path, id: &str, class: u8) -> PathBuf {
    dir.join(cam_file_name(id, class))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img_7.npyish");
        let values: Vec<f32> = (0..12).map(|i| i as f32 * 0.25).collect();
        write_cam(&path, 4, 3, &values).unwrap();
        let (w, h, got) = read_cam(&path).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(got, values);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.npyish");
        fs::write(&path, b"NOPE\x01\x00\x00\x00\x01\x00\x00\x00").unwrap();
        assert!(matches!(read_cam(&path), Err(DatasetError::Cam { .. })));
        fs::write(&path, b"CAM1\x02\x00\x00\x00\x02\x00\x00\x00\x00").unwrap();
        assert!(matches!(read_cam(&path), Err(DatasetError::Cam { .. })));
    }

    #[test]
    fn lists_classes_for_image() {
        let dir = tempfile::tempdir().unwrap();
        for c in [3u8, 11] {
            write_cam(&dir.path().join(cam_file_name("img", c)), 2, 2, &[0.0; 4]).unwrap();
        }
        write_cam(&dir.path().join(cam_file_name("other", 5)), 2, 2, &[0.0; 4]).unwrap();
        assert_eq!(classes_with_cams(dir.path(), "img"), vec![3, 11]);
    }
}
