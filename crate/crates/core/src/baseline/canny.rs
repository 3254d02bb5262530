//! Canny edge detection: Gaussian blur, Sobel gradients, non-maximum
//! suppression, double-threshold hysteresis.

use serde::{Deserialize, Serialize};

use super::{MIN_SIDE, check_size, filter};
use crate::error::ImagingError;
use crate::frame::Image;
use crate::mask::Mask;

/// Upper bound accepted for either threshold.
pub const MAX_THRESHOLD: f64 = 255.0 * std::f64::consts::SQRT_2;

/// Thresholds apply to the magnitude of the unnormalized 3x3 Sobel response
/// of the blurred 8-bit luma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub gaussian_sigma: f64,
    pub low_threshold: f64,
    pub high_threshold: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            gaussian_sigma: 1.4,
            low_threshold: 50.0,
            high_threshold: 150.0,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.gaussian_sigma.is_nan() || self.gaussian_sigma <= 0.0 {
            return Err(format!("gaussian_sigma must be positive, got {}", self.gaussian_sigma));
        }
        if !(self.low_threshold > 0.0
            && self.low_threshold < self.high_threshold
            && self.high_threshold <= MAX_THRESHOLD)
        {
            return Err(format!(
                "need 0 < low < high <= {MAX_THRESHOLD:.1}, got {} / {}",
                self.low_threshold, self.high_threshold
            ));
        }
        Ok(())
    }
}

/// Sobel gradients of the blurred luma: `(gx, gy, magnitude)`.
pub fn gradients(image: &Image, sigma: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let blurred = filter::gaussian_blur(&image.to_luma(), w, h, sigma);
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        blurred[y * w + x]
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        }
    }
    let mag = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    (gx, gy, mag)
}

/// Keeps pixels that are maxima along their gradient direction. On a
/// plateau of two equal values only the first (left/top) survives, so ideal
/// step edges come out one pixel wide.
fn non_maximum_suppression(gx: &[f64], gy: &[f64], mag: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let mut angle = gy[i].atan2(gx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            // (before, after) neighbours along the gradient
            let (before, after) = if !(22.5..157.5).contains(&angle) {
                (mag[i - 1], mag[i + 1])
            } else if angle < 67.5 {
                (mag[i - w - 1], mag[i + w + 1])
            } else if angle < 112.5 {
                (mag[i - w], mag[i + w])
            } else {
                (mag[i - w + 1], mag[i + w - 1])
            };
            if m > before && m >= after {
                out[i] = m;
            }
        }
    }
    out
}

fn hysteresis(thin: &[f64], w: usize, h: usize, low: f64, high: f64) -> Vec<bool> {
    let mut edge = vec![false; w * h];
    let mut stack: Vec<usize> = Vec::new();
    for (i, v) in thin.iter().enumerate() {
        if *v >= high {
            edge[i] = true;
            stack.push(i);
        }
    }
    while let Some(i) = stack.pop() {
        let (x, y) = (i % w, i / w);
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                let j = ny * w + nx;
                if !edge[j] && thin[j] >= low {
                    edge[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    edge
}

pub fn compute_canny(image: &Image, p: &CannyParams) -> Result<Mask, ImagingError> {
    check_size(image, MIN_SIDE)?;
    let (w, h) = (image.width() as usize, image.height() as usize);
    let (gx, gy, mag) = gradients(image, p.gaussian_sigma);
    let thin = non_maximum_suppression(&gx, &gy, &mag, w, h);
    let edges = hysteresis(&thin, w, h, p.low_threshold, p.high_threshold);
    Mask::from_bools(image.width(), image.height(), &edges)
}

/// Flags obstruction when edge density under the content exceeds the
/// frame's overall edge density.
pub fn canny_obstruction(raw: &Image, content_mask: &Mask, p: &CannyParams) -> Result<bool, ImagingError> {
    if content_mask.dimensions() != raw.dimensions() {
        return Err(ImagingError::DimensionMismatch {
            left: raw.dimensions(),
            right: content_mask.dimensions(),
        });
    }
    let area = content_mask.area();
    if area == 0 {
        return Err(ImagingError::EmptyContentMask);
    }
    let edges = compute_canny(raw, p)?;
    let inside = edges.count_and(content_mask)?;
    let total = edges.area();
    let n = content_mask.len() as u64;
    // inside/area > total/n, in exact integers
    Ok(u128::from(inside) * u128::from(n) > u128::from(total) * u128::from(area))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::BBox;

    fn step(w: u32, h: u32, c: u32) -> Image {
        let mut img = Image::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in c..w {
                img.put_pixel(x, y, [255, 255, 255]);
            }
        }
        img
    }

    #[test]
    fn params_validation() {
        assert!(CannyParams::default().validate().is_ok());
        let bad = CannyParams {
            low_threshold: 150.0,
            high_threshold: 50.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = CannyParams {
            high_threshold: 400.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn flat_image_has_no_edges() {
        let m = compute_canny(&Image::filled(16, 16, [9, 9, 9]), &CannyParams::default()).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn vertical_step_gives_thin_line() {
        let c = 16;
        let m = compute_canny(&step(32, 32, c), &CannyParams::default()).unwrap();
        assert!(!m.is_empty());
        for y in 1..31 {
            let xs: Vec<u32> = (0..32).filter(|x| m.get(*x, y)).collect();
            assert_eq!(xs.len(), 1, "row {y}: {xs:?}");
            assert!(xs[0].abs_diff(c) <= 1);
        }
    }

    #[test]
    fn edges_exceed_low_threshold() {
        let mut img = step(24, 24, 9);
        img.put_pixel(3, 3, [128, 128, 128]);
        let p = CannyParams::default();
        let (_, _, mag) = gradients(&img, p.gaussian_sigma);
        let m = compute_canny(&img, &p).unwrap();
        for (x, y) in m.iter_set() {
            assert!(mag[(y * 24 + x) as usize] >= p.low_threshold);
        }
    }

    #[test]
    fn uniform_image_never_obstructs() {
        let img = Image::filled(20, 20, [50, 60, 70]);
        let mask = Mask::rect(20, 20, BBox::new(2, 2, 10, 10));
        assert!(!canny_obstruction(&img, &mask, &CannyParams::default()).unwrap());
    }
}
