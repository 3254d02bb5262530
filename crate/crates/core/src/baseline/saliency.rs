//! Spectral-residual saliency.
//!
//! The log-amplitude spectrum of the grayscale frame minus its 3x3 local
//! average (the "residual") is recombined with the original phase,
//! inverse-transformed, squared, Gaussian-smoothed and min-max normalized.
//!
//! Log amplitude is taken as `ln(1 + |F|)`. Synthetic frames have exact
//! spectral zeros, where a plain logarithm would dominate the residual.
//! Those zeros carry no usable phase, so they are left out of the
//! reconstruction.

use rustfft::FftPlanner;
use rustfft::num_complex::Complex64;

use super::{MIN_SIDE, check_size, filter};
use crate::error::ImagingError;
use crate::frame::Image;
use crate::mask::Mask;

/// Per-pixel saliency in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyField {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl SaliencyField {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Coordinates of the (first) maximum.
    pub fn argmax(&self) -> (u32, u32) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        let w = self.width as usize;
        ((best % w) as u32, (best / w) as u32)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Mean over the set pixels of `mask`.
    pub fn mean_over(&self, mask: &Mask) -> Result<f64, ImagingError> {
        if mask.dimensions() != (self.width, self.height) {
            return Err(ImagingError::DimensionMismatch {
                left: mask.dimensions(),
                right: (self.width, self.height),
            });
        }
        let area = mask.area();
        if area == 0 {
            return Err(ImagingError::EmptyContentMask);
        }
        Ok(mask.iter_set().map(|(x, y)| self.get(x, y)).sum::<f64>() / area as f64)
    }
}

/// Gaussian smoothing applied to the squared reconstruction, scaled to the frame.
pub fn smoothing_sigma(width: u32, height: u32) -> f64 {
    (0.03 * f64::from(width.max(height))).max(1.5)
}

fn fft2(data: &mut [Complex64], width: usize, height: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let mut column = vec![Complex64::default(); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = data[y * width + x];
        }
        col_fft.process(&mut column);
        for y in 0..height {
            data[y * width + x] = column[y];
        }
    }
}

/// 3x3 mean with wrap-around borders (the spectrum is periodic).
fn box3_wrap(plane: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut s = 0.0;
            for dy in [height - 1, 0, 1] {
                for dx in [width - 1, 0, 1] {
                    s += plane[((y + dy) % height) * width + (x + dx) % width];
                }
            }
            out[y * width + x] = s / 9.0;
        }
    }
    out
}

/// Spectral coefficients at or below this fraction of the largest magnitude
/// are dropped from the reconstruction.
pub const PHASE_FLOOR: f64 = 1e-9;

/// Squared spectral-residual reconstruction before smoothing. Exposed for
/// cross-checking against an independent transform.
pub fn residual_energy(gray: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut spectrum: Vec<Complex64> = gray.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    fft2(&mut spectrum, width, height, false);
    let log_amp: Vec<f64> = spectrum.iter().map(|c| c.norm().ln_1p()).collect();
    let avg = box3_wrap(&log_amp, width, height);
    let floor = spectrum.iter().map(|c| c.norm()).fold(0.0, f64::max) * PHASE_FLOOR;
    let mut recon: Vec<Complex64> = spectrum
        .iter()
        .zip(log_amp.iter().zip(&avg))
        .map(|(c, (l, a))| {
            // the phase of a numerically zero coefficient is rounding noise
            if c.norm() <= floor {
                Complex64::default()
            } else {
                Complex64::from_polar((l - a).exp(), c.arg())
            }
        })
        .collect();
    fft2(&mut recon, width, height, true);
    let n = (width * height) as f64;
    recon.iter().map(|c| (c / n).norm_sqr()).collect()
}

pub fn compute_saliency(image: &Image) -> Result<SaliencyField, ImagingError> {
    check_size(image, MIN_SIDE)?;
    let (w, h) = (image.width() as usize, image.height() as usize);
    let gray = image.to_luma();
    let (lo, hi) = gray
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if hi - lo == 0.0 {
        // A flat frame has no spectral residual.
        return Ok(SaliencyField {
            width: image.width(),
            height: image.height(),
            values: vec![0.0; w * h],
        });
    }
    let energy = residual_energy(&gray, w, h);
    let smoothed = filter::gaussian_blur(&energy, w, h, smoothing_sigma(image.width(), image.height()));
    let (lo, hi) = smoothed
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let span = hi - lo;
    let values = if span > 0.0 {
        smoothed.iter().map(|v| (v - lo) / span).collect()
    } else {
        vec![0.0; w * h]
    };
    Ok(SaliencyField {
        width: image.width(),
        height: image.height(),
        values,
    })
}

/// Flags obstruction when the content covers above-average saliency:
/// mean saliency under the mask strictly exceeds the frame mean.
pub fn saliency_obstruction(raw: &Image, content_mask: &Mask) -> Result<bool, ImagingError> {
    if content_mask.dimensions() != raw.dimensions() {
        return Err(ImagingError::DimensionMismatch {
            left: raw.dimensions(),
            right: content_mask.dimensions(),
        });
    }
    if content_mask.area() == 0 {
        return Err(ImagingError::EmptyContentMask);
    }
    let field = compute_saliency(raw)?;
    let inside: f64 = content_mask.iter_set().map(|(x, y)| field.get(x, y)).sum();
    let total: f64 = field.values.iter().sum();
    // inside/area > total/n, cross-multiplied
    Ok(inside * field.values.len() as f64 > total * content_mask.area() as f64)
}
