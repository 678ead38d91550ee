//! Binary masks plus the morphology and connected-component helpers used by
//! the oracle backend and the composer.

use alloc::vec;
use alloc::vec::Vec;

use crate::geom::{BoundingBox, Point};
use crate::label::LabelMap;

/// An image-sized binary mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn same_size(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    /// Number of set pixels.
    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_blank(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn or_assign(&mut self, other: &Mask) {
        debug_assert!(self.same_size(other));
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a |= b;
        }
    }

    pub fn intersection_area(&self, other: &Mask) -> usize {
        debug_assert!(self.same_size(other));
        self.data
            .iter()
            .zip(other.data.iter())
            .filter(|(&a, &b)| a && b)
            .count()
    }

    /// Intersection over union; 0 when both masks are empty.
    pub fn iou(&self, other: &Mask) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        debug_assert!(self.same_size(other));
        self.data
            .iter()
            .zip(other.data.iter())
            .all(|(&a, &b)| !a || b)
    }

    /// Chebyshev dilation: a pixel is set if any pixel within `radius` (in
    /// the max-norm) is set in the input. Stays clipped to the image.
    pub fn dilated(&self, radius: u32) -> Mask {
        let mut out = self.clone();
        for _ in 0..radius {
            out = out.dilate_once();
        }
        out
    }

    /// Chebyshev erosion, the dual of [`Mask::dilated`]. Out-of-image samples
    /// count as unset, so masks touching the border shrink there too.
    pub fn eroded(&self, radius: u32) -> Mask {
        let mut out = self.clone();
        for _ in 0..radius {
            out = out.erode_once();
        }
        out
    }

    fn dilate_once(&self) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    let x0 = x.saturating_sub(1);
                    let y0 = y.saturating_sub(1);
                    let x1 = (x + 1).min(self.width - 1);
                    let y1 = (y + 1).min(self.height - 1);
                    for ny in y0..=y1 {
                        for nx in x0..=x1 {
                            out.set(nx, ny, true);
                        }
                    }
                }
            }
        }
        out
    }

    fn erode_once(&self) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(x, y) {
                    continue;
                }
                let mut keep = true;
                'win: for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let nx = x as i64 + dx;
                        let ny = y as i64 + dy;
                        if nx < 0
                            || ny < 0
                            || nx >= self.width as i64
                            || ny >= self.height as i64
                            || !self.get(nx as u32, ny as u32)
                        {
                            keep = false;
                            break 'win;
                        }
                    }
                }
                out.set(x, y, keep);
            }
        }
        out
    }

    /// Pixels of `self` inside the box.
    pub fn clipped_to(&self, bbox: &BoundingBox) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        let x1 = bbox.x_max.min(self.width);
        let y1 = bbox.y_max.min(self.height);
        for y in bbox.y_min..y1 {
            for x in bbox.x_min..x1 {
                if self.get(x, y) {
                    out.set(x, y, true);
                }
            }
        }
        out
    }
}

/// Connected components of equal-valued pixels in a label map,
/// 4-connectivity. Ignore-valued (255) regions form components too.
#[derive(Clone, Debug)]
pub struct ComponentMap {
    width: u32,
    height: u32,
    comp: Vec<u32>,
    values: Vec<u8>,
    sizes: Vec<usize>,
}

impl ComponentMap {
    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn comp_at(&self, p: Point) -> u32 {
        self.comp[p.index(self.width)]
    }

    pub fn value_of(&self, comp: u32) -> u8 {
        self.values[comp as usize]
    }

    pub fn size_of(&self, comp: u32) -> usize {
        self.sizes[comp as usize]
    }

    /// Mask covering every pixel whose component is flagged in `selected`.
    pub fn mask_of(&self, selected: &[bool]) -> Mask {
        debug_assert_eq!(selected.len(), self.values.len());
        let data = self
            .comp
            .iter()
            .map(|&c| selected[c as usize])
            .collect::<Vec<_>>();
        Mask::from_raw(self.width, self.height, data)
    }

    /// Pixel count of each component inside the box, indexed by component id.
    pub fn overlaps_with_box(&self, bbox: &BoundingBox) -> Vec<usize> {
        let mut counts = vec![0usize; self.values.len()];
        let x1 = bbox.x_max.min(self.width);
        let y1 = bbox.y_max.min(self.height);
        for y in bbox.y_min..y1 {
            for x in bbox.x_min..x1 {
                counts[self.comp[(y * self.width + x) as usize] as usize] += 1;
            }
        }
        counts
    }
}

/// Label equal-valued 4-connected regions. Component ids are assigned in
/// row-major discovery order, so the labeling is deterministic.
pub fn connected_components(label: &LabelMap) -> ComponentMap {
    let width = label.width();
    let height = label.height();
    let n = width as usize * height as usize;
    let mut comp = vec![u32::MAX; n];
    let mut values = Vec::new();
    let mut sizes = Vec::new();
    let mut stack: Vec<(u32, u32)> = Vec::new();

    for start in 0..n {
        if comp[start] != u32::MAX {
            continue;
        }
        let id = values.len() as u32;
        let sx = (start % width as usize) as u32;
        let sy = (start / width as usize) as u32;
        let value = label.get(sx, sy);
        values.push(value);
        sizes.push(0usize);
        stack.push((sx, sy));
        comp[start] = id;
        while let Some((x, y)) = stack.pop() {
            sizes[id as usize] += 1;
            let neighbors = [
                (x.wrapping_sub(1), y),
                (x + 1, y),
                (x, y.wrapping_sub(1)),
                (x, y + 1),
            ];
            for (nx, ny) in neighbors {
                if nx < width && ny < height {
                    let idx = (ny * width + nx) as usize;
                    if comp[idx] == u32::MAX && label.get(nx, ny) == value {
                        comp[idx] = id;
                        stack.push((nx, ny));
                    }
                }
            }
        }
    }

    ComponentMap {
        width,
        height,
        comp,
        values,
        sizes,
    }
}
