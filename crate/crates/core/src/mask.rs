//! Binary pixel masks with exact set arithmetic.
//!
//! Bits are stored row-major, 64 pixels per word. Bits past `width * height`
//! in the final word are always zero, so whole-word popcounts are exact.

use crate::error::ImagingError;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("area", &self.area())
            .finish()
    }
}

/// Axis-aligned pixel box, `min` inclusive and `max` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// True when the box is non-degenerate and lies inside a `width`×`height` frame.
    pub fn is_valid_within(&self, width: u32, height: u32) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max && self.x_max <= width && self.y_max <= height
    }

    /// Box grown by `margin` on every side, clamped to the frame.
    pub fn dilate(&self, margin: u32, width: u32, height: u32) -> BBox {
        BBox {
            x_min: self.x_min.saturating_sub(margin),
            y_min: self.y_min.saturating_sub(margin),
            x_max: self.x_max.saturating_add(margin).min(width),
            y_max: self.y_max.saturating_add(margin).min(height),
        }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    pub fn to_array(self) -> [u32; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn from_array(a: [u32; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        let len = (width as usize * height as usize).div_ceil(64);
        Self {
            width,
            height,
            words: vec![0; len],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        let mut m = Self::empty(width, height);
        m.words.fill(u64::MAX);
        m.clear_tail();
        m
    }

    /// Builds a mask from one boolean per pixel, row-major.
    pub fn from_bools(width: u32, height: u32, bits: &[bool]) -> Result<Self, ImagingError> {
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(ImagingError::BufferLength {
                expected,
                actual: bits.len(),
            });
        }
        let mut m = Self::empty(width, height);
        for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
            m.words[i / 64] |= 1 << (i % 64);
        }
        Ok(m)
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// Filled rectangle clipped to the frame.
    pub fn rect(width: u32, height: u32, b: BBox) -> Self {
        Self::from_fn(width, height, |x, y| b.contains(x, y))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.get_index(self.index(x, y))
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        self.set_index(i, value);
    }

    pub(crate) fn get_index(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub(crate) fn set_index(&mut self, i: usize, value: bool) {
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    fn index(&self, x: u32, y: u32) -> usize {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) out of bounds");
        y as usize * self.width as usize + x as usize
    }

    fn clear_tail(&mut self) {
        let rem = self.len() % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    /// Number of set pixels.
    pub fn area(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Row-major iterator over set pixel coordinates.
    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.words.iter().enumerate().flat_map(move |(wi, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let i = wi * 64 + tz;
                Some(((i % w) as u32, (i / w) as u32))
            })
        })
    }

    /// Tight bounding box of the set pixels, `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<BBox> {
        let mut it = self.iter_set();
        let (x0, y0) = it.next()?;
        let mut b = BBox::new(x0, y0, x0 + 1, y0 + 1);
        for (x, y) in it {
            b.x_min = b.x_min.min(x);
            b.y_min = b.y_min.min(y);
            b.x_max = b.x_max.max(x + 1);
            b.y_max = b.y_max.max(y + 1);
        }
        Some(b)
    }

    pub(crate) fn ensure_same_size(&self, other: &Mask) -> Result<(), ImagingError> {
        if self.dimensions() != other.dimensions() {
            return Err(ImagingError::DimensionMismatch {
                left: self.dimensions(),
                right: other.dimensions(),
            });
        }
        Ok(())
    }

    fn combine(&self, other: &Mask, op: impl Fn(u64, u64) -> u64) -> Result<Mask, ImagingError> {
        self.ensure_same_size(other)?;
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| op(*a, *b))
            .collect();
        Ok(Mask {
            width: self.width,
            height: self.height,
            words,
        })
    }

    pub fn intersection(&self, other: &Mask) -> Result<Mask, ImagingError> {
        self.combine(other, |a, b| a & b)
    }

    pub fn union(&self, other: &Mask) -> Result<Mask, ImagingError> {
        self.combine(other, |a, b| a | b)
    }

    pub(crate) fn count_and(&self, other: &Mask) -> Result<u64, ImagingError> {
        self.ensure_same_size(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| u64::from((a & b).count_ones()))
            .sum())
    }

    pub(crate) fn count_or(&self, other: &Mask) -> Result<u64, ImagingError> {
        self.ensure_same_size(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| u64::from((a | b).count_ones()))
            .sum())
    }

    /// Row-major booleans, one per pixel.
    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.get_index(i)).collect()
    }

    /// Mask shifted by `(dx, dy)`; pixels leaving the frame are dropped.
    pub fn translate(&self, dx: i64, dy: i64) -> Mask {
        let mut out = Mask::empty(self.width, self.height);
        for (x, y) in self.iter_set() {
            let nx = i64::from(x) + dx;
            let ny = i64::from(y) + dy;
            if nx >= 0 && ny >= 0 && nx < i64::from(self.width) && ny < i64::from(self.height) {
                out.set(nx as u32, ny as u32, true);
            }
        }
        out
    }
}
