//! COCO-style run-length encoding of binary masks, over a **row-major**
//! flattening of the image.
//!
//! `counts` holds alternating run lengths and always starts with the run of
//! zeros (which may have length 0). The counts sum to `width * height`; an
//! empty image encodes to a single zero-run.

use alloc::vec::Vec;
use thiserror::Error;

use crate::mask::Mask;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rle {
    pub width: u32,
    pub height: u32,
    pub counts: Vec<u32>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RleError {
    #[error("run lengths sum to {got}, expected {expected} for {width}x{height}")]
    LengthMismatch {
        got: u64,
        expected: u64,
        width: u32,
        height: u32,
    },
}

pub fn encode(mask: &Mask) -> Rle {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run: u32 = 0;
    for &bit in mask.data() {
        if bit == current {
            run += 1;
        } else {
            counts.push(run);
            current = bit;
            run = 1;
        }
    }
    counts.push(run);
    Rle {
        width: mask.width(),
        height: mask.height(),
        counts,
    }
}

pub fn decode(rle: &Rle) -> Result<Mask, RleError> {
    let expected = rle.width as u64 * rle.height as u64;
    let got: u64 = rle.counts.iter().map(|&c| c as u64).sum();
    if got != expected {
        return Err(RleError::LengthMismatch {
            got,
            expected,
            width: rle.width,
            height: rle.height,
        });
    }
    let mut data = Vec::with_capacity(expected as usize);
    let mut bit = false;
    for &run in &rle.counts {
        for _ in 0..run {
            data.push(bit);
        }
        bit = !bit;
    }
    Ok(Mask::from_raw(rle.width, rle.height, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodes_known_pattern() {
        // row-major 4x2: 0011 / 1100
        let mask = Mask::from_raw(
            4,
            2,
            alloc::vec![false, false, true, true, true, true, false, false],
        );
        let rle = encode(&mask);
        assert_eq!(rle.counts, alloc::vec![2, 4, 2]);
        assert_eq!(decode(&rle).unwrap(), mask);
    }

    #[test]
    fn all_zero_and_all_one() {
        let zero = Mask::new(3, 3);
        assert_eq!(encode(&zero).counts, alloc::vec![9]);
        let one = Mask::from_fn(3, 3, |_, _| true);
        assert_eq!(encode(&one).counts, alloc::vec![0, 9]);
    }

    #[test]
    fn decode_rejects_bad_length() {
        let rle = Rle {
            width: 2,
            height: 2,
            counts: alloc::vec![3],
        };
        assert!(matches!(decode(&rle), Err(RleError::LengthMismatch { .. })));
    }

    #[test]
    fn empty_image() {
        let m = Mask::new(0, 0);
        let rle = encode(&m);
        assert_eq!(decode(&rle).unwrap(), m);
    }
}
