//! Pixel-space primitives shared across the pipeline.

use thiserror::Error;

/// A pixel coordinate. `x` is the column, `y` the row, origin top-left.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    /// Row-major flat index within a `width`-wide image.
    pub fn index(&self, width: u32) -> usize {
        self.y as usize * width as usize + self.x as usize
    }

    pub fn in_bounds(&self, width: u32, height: u32) -> bool {
        self.x < width && self.y < height
    }

    /// Key that sorts points in row-major (scanline) order.
    pub fn row_major_key(&self) -> (u32, u32) {
        (self.y, self.x)
    }
}

/// An axis-aligned box with exclusive maxima: a valid box satisfies
/// `x_min < x_max` and `y_min < y_max`, and fits an image when
/// `x_max <= width` and `y_max <= height`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundingBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BoxError {
    #[error("degenerate box ({x_min}, {y_min}, {x_max}, {y_max})")]
    Degenerate {
        x_min: u32,
        y_min: u32,
        x_max: u32,
        y_max: u32,
    },
    #[error("box ({x_min}, {y_min}, {x_max}, {y_max}) exceeds image bounds {width}x{height}")]
    OutOfBounds {
        x_min: u32,
        y_min: u32,
        x_max: u32,
        y_max: u32,
        width: u32,
        height: u32,
    },
}

impl BoundingBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self, BoxError> {
        if x_min >= x_max || y_min >= y_max {
            return Err(BoxError::Degenerate {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x < self.x_max && p.y >= self.y_min && p.y < self.y_max
    }

    pub fn check_fits(&self, width: u32, height: u32) -> Result<(), BoxError> {
        if self.x_max > width || self.y_max > height {
            return Err(BoxError::OutOfBounds {
                x_min: self.x_min,
                y_min: self.y_min,
                x_max: self.x_max,
                y_max: self.y_max,
                width,
                height,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_box() {
        assert!(matches!(
            BoundingBox::new(10, 10, 5, 20),
            Err(BoxError::Degenerate { .. })
        ));
        assert!(matches!(
            BoundingBox::new(3, 7, 3, 9),
            Err(BoxError::Degenerate { .. })
        ));
    }

    #[test]
    fn box_geometry() {
        let b = BoundingBox::new(2, 3, 5, 7).unwrap();
        assert_eq!(b.width(), 3);
        assert_eq!(b.height(), 4);
        assert_eq!(b.area(), 12);
        assert!(b.contains(Point::new(2, 3)));
        assert!(!b.contains(Point::new(5, 3)));
        assert!(b.check_fits(5, 7).is_ok());
        assert!(b.check_fits(4, 7).is_err());
    }
}
