//! Axis-aligned bounding boxes with inclusive pixel corners.
//!
//! A box is parameterized by its top-left corner `(x1, y1)` and bottom-right
//! corner `(x2, y2)`, both inclusive, with `x` the column index and `y` the
//! row index (origin at the top-left of the image). The smallest valid box is
//! a single pixel, so `area = (x2 - x1 + 1) * (y2 - y1 + 1) >= 1`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl BoundingBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Result<Self> {
        if x1 > x2 || y1 > y2 {
            return Err(Error::InvalidInput(format!(
                "degenerate box ({x1},{y1},{x2},{y2}): corners must satisfy x1 <= x2, y1 <= y2"
            )));
        }
        Ok(BoundingBox { x1, y1, x2, y2 })
    }

    /// The box covering an entire `width` x `height` image.
    pub fn full_image(width: u32, height: u32) -> Self {
        debug_assert!(width >= 1 && height >= 1);
        BoundingBox {
            x1: 0,
            y1: 0,
            x2: width - 1,
            y2: height - 1,
        }
    }

    pub fn width(&self) -> u32 {
        self.x2 - self.x1 + 1
    }

    pub fn height(&self) -> u32 {
        self.y2 - self.y1 + 1
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains_point(&self, x: u32, y: u32) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }

    /// True if the box fits inside a `width` x `height` image.
    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x2 < width && self.y2 < height
    }

    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        let x2 = self.x2.min(other.x2);
        let y2 = self.y2.min(other.y2);
        if x1 <= x2 && y1 <= y2 {
            Some(BoundingBox { x1, y1, x2, y2 })
        } else {
            None
        }
    }

    /// Tie-break key: boxes compare by (y1, x1, y2, x2).
    pub fn lex_key(&self) -> (u32, u32, u32, u32) {
        (self.y1, self.x1, self.y2, self.x2)
    }

    pub fn to_array(&self) -> [u32; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn from_array(a: [u32; 4]) -> Result<Self> {
        BoundingBox::new(a[0], a[1], a[2], a[3])
    }
}

impl std::fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{},{},{}]", self.x1, self.y1, self.x2, self.y2)
    }
}
