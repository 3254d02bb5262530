//! Pasting RGBA sprites onto frames to build pairs with a known content mask.

use crate::error::ImagingError;
use crate::frame::Image;
use crate::mask::Mask;

/// Sprite pixels with alpha at or above this overwrite the frame.
pub const OPAQUE_ALPHA: u8 = 128;

/// An RGBA image with straight alpha.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sprite {
    width: u32,
    height: u32,
    rgba: Vec<u8>,
}

impl Sprite {
    pub fn from_rgba(width: u32, height: u32, rgba: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyImage);
        }
        let expected = width as usize * height as usize * 4;
        if rgba.len() != expected {
            return Err(ImagingError::BufferLength {
                expected,
                actual: rgba.len(),
            });
        }
        Ok(Self { width, height, rgba })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 4]) -> Result<Self, ImagingError> {
        let mut rgba = Vec::with_capacity(width as usize * height as usize * 4);
        for y in 0..height {
            for x in 0..width {
                rgba.extend_from_slice(&f(x, y));
            }
        }
        Self::from_rgba(width, height, rgba)
    }

    /// A fully opaque rectangle of one colour.
    pub fn solid(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImagingError> {
        Self::from_fn(width, height, |_, _| [rgb[0], rgb[1], rgb[2], 255])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = (y as usize * self.width as usize + x as usize) * 4;
        [self.rgba[i], self.rgba[i + 1], self.rgba[i + 2], self.rgba[i + 3]]
    }
}

/// Pastes `content` onto a copy of `raw` with its top-left corner at
/// `(x, y)`. Returns the augmented frame and the mask of overwritten pixels.
pub fn composite_scene(raw: &Image, content: &Sprite, x: u32, y: u32) -> Result<(Image, Mask), ImagingError> {
    let (w, h) = raw.dimensions();
    let fits = x.checked_add(content.width).is_some_and(|r| r <= w)
        && y.checked_add(content.height).is_some_and(|b| b <= h);
    if !fits {
        return Err(ImagingError::OutOfBounds {
            x,
            y,
            width: content.width,
            height: content.height,
        });
    }
    let mut aug = raw.clone();
    let mut mask = Mask::empty(w, h);
    for sy in 0..content.height {
        for sx in 0..content.width {
            let [r, g, b, a] = content.pixel(sx, sy);
            if a >= OPAQUE_ALPHA {
                aug.put_pixel(x + sx, y + sy, [r, g, b]);
                mask.set(x + sx, y + sy, true);
            }
        }
    }
    Ok((aug, mask))
}
