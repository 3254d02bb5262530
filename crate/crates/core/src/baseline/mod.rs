//! Classical-vision baselines that judge obstruction from the raw frame and
//! the content mask alone, without knowing what the key objects are.

pub mod canny;
pub mod filter;
pub mod saliency;

pub use canny::{CannyParams, canny_obstruction, compute_canny};
pub use saliency::{SaliencyField, compute_saliency, saliency_obstruction};

use crate::error::ImagingError;
use crate::frame::Image;

/// Smallest side length either baseline accepts.
pub const MIN_SIDE: u32 = 8;

fn check_size(image: &Image, min: u32) -> Result<(), ImagingError> {
    if image.width() < min || image.height() < min {
        return Err(ImagingError::ImageTooSmall {
            min,
            actual: image.dimensions(),
        });
    }
    Ok(())
}
