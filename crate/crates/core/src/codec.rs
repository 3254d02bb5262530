//! PNG encoding for frames and masks.
//!
//! Masks are single-channel 8-bit PNGs. The writer emits only 0 and 255; the
//! reader treats any nonzero sample as set.

use std::io::Cursor;
use std::path::Path;

use image::{ImageEncoder, codecs::png::PngEncoder};

use crate::error::ImagingError;
use crate::frame::Image;
use crate::mask::Mask;

fn codec_err(e: image::ImageError) -> ImagingError {
    ImagingError::Codec(e.to_string())
}

/// Canonical PNG bytes for an image. Identical images always encode to
/// identical bytes, which request fingerprinting relies on.
pub fn encode_png(image: &Image) -> Vec<u8> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(
            image.as_raw(),
            image.width(),
            image.height(),
            image::ExtendedColorType::Rgb8,
        )
        .expect("encoding an in-memory RGB8 buffer cannot fail");
    out
}

pub fn decode_png(bytes: &[u8]) -> Result<Image, ImagingError> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(codec_err)?
        .into_rgb8();
    let (w, h) = decoded.dimensions();
    Image::from_raw(w, h, decoded.into_raw())
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image, ImagingError> {
    decode_png(&std::fs::read(path)?)
}

pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    std::fs::write(path, encode_png(image))?;
    Ok(())
}

pub fn encode_mask_png(mask: &Mask) -> Vec<u8> {
    let samples: Vec<u8> = mask
        .to_bools()
        .into_iter()
        .map(|b| if b { 255 } else { 0 })
        .collect();
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(&samples, mask.width(), mask.height(), image::ExtendedColorType::L8)
        .expect("encoding an in-memory L8 buffer cannot fail");
    out
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<Mask, ImagingError> {
    let gray = image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()?
        .decode()
        .map_err(codec_err)?
        .into_luma8();
    let (w, h) = gray.dimensions();
    let bits: Vec<bool> = gray.into_raw().into_iter().map(|v| v != 0).collect();
    Mask::from_bools(w, h, &bits)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask, ImagingError> {
    decode_mask_png(&std::fs::read(path)?)
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    std::fs::write(path, encode_mask_png(mask))?;
    Ok(())
}
