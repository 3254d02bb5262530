//! Pixel-level arithmetic behind the obstruction test: virtual-content
//! extraction by frame differencing, overlap counts, and ratios.

use serde::{Deserialize, Serialize};

use crate::error::ImagingError;
use crate::frame::Image;
use crate::mask::Mask;

/// Parameters for turning a raw/augmented frame difference into a content mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffConfig {
    /// A pixel counts as changed when any channel differs by more than this.
    pub tolerance: u8,
    /// 8-connected components smaller than this many pixels are dropped.
    pub min_component_area: u32,
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self {
            tolerance: 8,
            min_component_area: 16,
        }
    }
}

impl DiffConfig {
    /// Exact differencing, no speckle removal. Used for synthetic frames.
    pub const EXACT: DiffConfig = DiffConfig {
        tolerance: 0,
        min_component_area: 0,
    };
}

/// Mask of pixels where `aug` departs from `raw` by more than the tolerance.
pub fn extract_virtual_mask(raw: &Image, aug: &Image, cfg: DiffConfig) -> Result<Mask, ImagingError> {
    raw.ensure_same_size(aug)?;
    let (w, h) = raw.dimensions();
    let tol = cfg.tolerance;
    let mut mask = Mask::empty(w, h);
    for (i, (a, b)) in raw
        .as_raw()
        .chunks_exact(3)
        .zip(aug.as_raw().chunks_exact(3))
        .enumerate()
    {
        if a.iter().zip(b).any(|(x, y)| x.abs_diff(*y) > tol) {
            mask.set_index(i, true);
        }
    }
    if cfg.min_component_area > 1 {
        remove_small_components(&mut mask, cfg.min_component_area);
    }
    Ok(mask)
}

/// Clears every 8-connected component with fewer than `min_area` pixels.
pub fn remove_small_components(mask: &mut Mask, min_area: u32) {
    let (w, h) = mask.dimensions();
    let (w, h) = (w as usize, h as usize);
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut component = Vec::new();
    for start in 0..w * h {
        if seen[start] || !mask.get_index(start) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        component.clear();
        while let Some(i) = stack.pop() {
            component.push(i);
            let (x, y) = (i % w, i / w);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if !seen[j] && mask.get_index(j) {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if component.len() < min_area as usize {
            for &i in &component {
                mask.set_index(i, false);
            }
        }
    }
}

/// `|a ∩ b|` in pixels.
pub fn mask_intersection_area(a: &Mask, b: &Mask) -> Result<u64, ImagingError> {
    a.count_and(b)
}

/// Fraction of the key object covered by content: `|key ∩ content| / |key|`.
pub fn obstruction_ratio(key_mask: &Mask, content_mask: &Mask) -> Result<f64, ImagingError> {
    key_mask.ensure_same_size(content_mask)?;
    let key_area = key_mask.area();
    if key_area == 0 {
        return Err(ImagingError::EmptyKeyMask);
    }
    let overlap = key_mask.count_and(content_mask)?;
    Ok(overlap as f64 / key_area as f64)
}

/// Intersection over union of two masks.
pub fn mask_iou(a: &Mask, b: &Mask) -> Result<f64, ImagingError> {
    let union = a.count_or(b)?;
    if union == 0 {
        return Err(ImagingError::BothEmpty);
    }
    Ok(a.count_and(b)? as f64 / union as f64)
}

/// The obstruction predicate for one key object: `overlap ≥ alpha · key_area`,
/// decided exactly for the given `f64` alpha.
///
/// The product is split into its rounded value and the rounding error
/// (recovered with a fused multiply-add) so that boundary cases such as
/// 25 of 100 pixels at alpha 0.25 never depend on rounding direction.
pub fn meets_threshold(overlap: u64, key_area: u64, alpha: f64) -> bool {
    let area = key_area as f64;
    let product = alpha * area;
    let err = alpha.mul_add(area, -product);
    let diff = overlap as f64 - product;
    diff >= err
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::BBox;

    fn gray(w: u32, h: u32) -> Image {
        Image::filled(w, h, [128, 128, 128])
    }

    #[test]
    fn identical_frames_give_empty_mask() {
        let img = gray(16, 16);
        let m = extract_virtual_mask(&img, &img, DiffConfig::EXACT).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn opaque_square_is_recovered() {
        let raw = gray(64, 64);
        let mut aug = raw.clone();
        for y in 5..15 {
            for x in 5..15 {
                aug.put_pixel(x, y, [255, 0, 0]);
            }
        }
        let m = extract_virtual_mask(&raw, &aug, DiffConfig::EXACT).unwrap();
        assert_eq!(m.area(), 100);
        assert_eq!(m, Mask::rect(64, 64, BBox::new(5, 5, 15, 15)));
    }

    #[test]
    fn within_tolerance_is_ignored() {
        let raw = gray(8, 8);
        let aug = Image::filled(8, 8, [129, 129, 129]);
        let cfg = DiffConfig {
            tolerance: 1,
            min_component_area: 0,
        };
        assert!(extract_virtual_mask(&raw, &aug, cfg).unwrap().is_empty());
    }

    #[test]
    fn speckles_below_min_area_are_removed() {
        let raw = gray(32, 32);
        let mut aug = raw.clone();
        aug.put_pixel(1, 1, [0, 0, 0]);
        aug.put_pixel(2, 2, [0, 0, 0]); // diagonal neighbour, same component
        for y in 10..14 {
            for x in 10..14 {
                aug.put_pixel(x, y, [0, 0, 0]);
            }
        }
        let cfg = DiffConfig {
            tolerance: 0,
            min_component_area: 3,
        };
        let m = extract_virtual_mask(&raw, &aug, cfg).unwrap();
        assert_eq!(m.area(), 16);
        assert!(!m.get(1, 1));

        let cfg = DiffConfig {
            tolerance: 0,
            min_component_area: 2,
        };
        let m = extract_virtual_mask(&raw, &aug, cfg).unwrap();
        assert_eq!(m.area(), 18);
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        assert!(matches!(
            extract_virtual_mask(&gray(4, 4), &gray(4, 5), DiffConfig::EXACT),
            Err(ImagingError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            mask_intersection_area(&Mask::empty(3, 3), &Mask::empty(3, 4)),
            Err(ImagingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ratio_examples() {
        let key = Mask::rect(20, 20, BBox::new(0, 0, 10, 10));
        let quarter = Mask::rect(20, 20, BBox::new(0, 0, 10, 10).dilate(0, 20, 20));
        assert_eq!(obstruction_ratio(&key, &quarter).unwrap(), 1.0);
        let overlap25 = Mask::rect(20, 20, BBox::new(0, 0, 5, 5));
        assert_eq!(obstruction_ratio(&key, &overlap25).unwrap(), 0.25);
        let disjoint = Mask::rect(20, 20, BBox::new(12, 12, 20, 20));
        assert_eq!(obstruction_ratio(&key, &disjoint).unwrap(), 0.0);
        assert!(matches!(
            obstruction_ratio(&Mask::empty(20, 20), &key),
            Err(ImagingError::EmptyKeyMask)
        ));
    }

    #[test]
    fn iou_examples() {
        let left = Mask::rect(10, 10, BBox::new(0, 0, 5, 10));
        let full = Mask::full(10, 10);
        assert_eq!(mask_iou(&left, &full).unwrap(), 0.5);
        assert_eq!(mask_iou(&left, &left).unwrap(), 1.0);
        let right = Mask::rect(10, 10, BBox::new(5, 0, 10, 10));
        assert_eq!(mask_iou(&left, &right).unwrap(), 0.0);
        assert!(matches!(
            mask_iou(&Mask::empty(10, 10), &Mask::empty(10, 10)),
            Err(ImagingError::BothEmpty)
        ));
    }

    #[test]
    fn threshold_is_inclusive() {
        assert!(meets_threshold(25, 100, 0.25));
        assert!(!meets_threshold(24, 100, 0.25));
        assert!(meets_threshold(100, 100, 1.0));
        assert!(!meets_threshold(99, 100, 1.0));
        // 0.1 as f64 is slightly above one tenth, so 3 of 30 falls short.
        assert!(!meets_threshold(3, 30, 0.1));
        assert!(meets_threshold(4, 30, 0.1));
        assert!(meets_threshold(0, 0, 0.5));
    }
}
