//! Seeded synthetic datasets.
//!
//! Each obstruction scene is a flat background with one textured key object
//! (a checkered rectangle) and one opaque content rectangle pasted with
//! [`composite_scene`]. Content colours are shifted by at least 96 per
//! channel from the pixels they cover, and content rectangles are at least
//! 4x4, so the default [`DiffConfig`](crate::imaging::DiffConfig) recovers
//! the content mask exactly. Labels are computed from the ground-truth masks
//! at the requested threshold.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::compose::{Sprite, composite_scene};
use super::dataset::{
    ManipulationEntry, ManipulationLabels, Manifest, ObstructionEntry, write_image, write_mask,
};
use crate::error::ImagingError;
use crate::frame::Image;
use crate::imaging::{mask_intersection_area, meets_threshold};
use crate::manipulation::ManipulationFactors;
use crate::mask::{BBox, Mask};

pub const KEY_OBJECT_NAMES: &[&str] = &[
    "stop sign",
    "exit sign",
    "fire extinguisher",
    "traffic light",
    "caution sign",
    "door handle",
    "power outlet",
    "smoke detector",
    "first aid kit",
    "crosswalk signal",
    "light switch",
    "thermostat",
    "elevator button",
    "road sign",
    "warning label",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub width: u32,
    pub height: u32,
    /// Threshold used to label obstruction scenes.
    pub alpha: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            width: 96,
            height: 72,
            alpha: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub raw: Image,
    pub aug: Image,
    pub key_object: String,
    pub key_mask: Mask,
    pub content_mask: Mask,
    pub obstructed: bool,
}

fn random_rgb(rng: &mut impl Rng, lo: u8, hi: u8) -> [u8; 3] {
    [
        rng.random_range(lo..=hi),
        rng.random_range(lo..=hi),
        rng.random_range(lo..=hi),
    ]
}

/// A colour at least 96 away from `under` in every channel.
pub fn contrasting(under: [u8; 3], jitter: [u8; 3]) -> [u8; 3] {
    let mut out = [0; 3];
    for c in 0..3 {
        out[c] = ((u16::from(under[c]) + 96 + u16::from(jitter[c] % 65)) % 256) as u8;
    }
    out
}

/// Paints a two-colour checkered rectangle onto `img`.
fn paint_key_object(img: &mut Image, b: BBox, a: [u8; 3], c: [u8; 3], cell: u32) {
    for y in b.y_min..b.y_max {
        for x in b.x_min..b.x_max {
            let odd = ((x - b.x_min) / cell + (y - b.y_min) / cell) % 2 == 1;
            img.put_pixel(x, y, if odd { c } else { a });
        }
    }
}

fn random_box(rng: &mut impl Rng, w: u32, h: u32, min_side: u32, max_w: u32, max_h: u32) -> BBox {
    let bw = rng.random_range(min_side..=max_w.max(min_side).min(w));
    let bh = rng.random_range(min_side..=max_h.max(min_side).min(h));
    let x = rng.random_range(0..=w - bw);
    let y = rng.random_range(0..=h - bh);
    BBox::new(x, y, x + bw, y + bh)
}

/// Content sprite over `place` whose every pixel contrasts with `raw`.
fn content_sprite(rng: &mut impl Rng, raw: &Image, place: BBox) -> Result<Sprite, ImagingError> {
    let jitter = random_rgb(rng, 0, 64);
    let stripe = rng.random_range(1..=4u32);
    Sprite::from_fn(place.x_max - place.x_min, place.y_max - place.y_min, |x, y| {
        let mut j = jitter;
        if (y / stripe) % 2 == 1 {
            j[0] = j[0].wrapping_add(32);
        }
        let [r, g, b] = contrasting(raw.pixel(place.x_min + x, place.y_min + y), j);
        [r, g, b, 255]
    })
}

/// Smallest frame side the generator supports.
pub const MIN_SYNTH_SIDE: u32 = 24;

fn check_options(opts: &SynthOptions) -> Result<(), ImagingError> {
    if opts.width < MIN_SYNTH_SIDE || opts.height < MIN_SYNTH_SIDE {
        return Err(ImagingError::ImageTooSmall {
            min: MIN_SYNTH_SIDE,
            actual: (opts.width, opts.height),
        });
    }
    Ok(())
}

fn scene_base(rng: &mut impl Rng, opts: &SynthOptions) -> (Image, BBox, String) {
    let (w, h) = (opts.width, opts.height);
    let mut raw = Image::filled(w, h, random_rgb(rng, 20, 200));
    let key_box = random_box(rng, w, h, 12, w / 2, h / 2);
    let cell = rng.random_range(2..=4);
    paint_key_object(&mut raw, key_box, random_rgb(rng, 0, 90), random_rgb(rng, 165, 255), cell);
    let name = KEY_OBJECT_NAMES[rng.random_range(0..KEY_OBJECT_NAMES.len())].to_owned();
    (raw, key_box, name)
}

/// One obstruction scene. About half the scenes aim the content at the key
/// object; the label is always recomputed from the masks.
pub fn obstruction_scene(rng: &mut impl Rng, opts: &SynthOptions) -> Result<SynthScene, ImagingError> {
    check_options(opts)?;
    let (w, h) = (opts.width, opts.height);
    let (raw, key_box, key_object) = scene_base(rng, opts);
    let key_mask = Mask::rect(w, h, key_box);
    let place = if rng.random_bool(0.5) {
        // centre inside the key box
        let cx = rng.random_range(key_box.x_min..key_box.x_max);
        let cy = rng.random_range(key_box.y_min..key_box.y_max);
        let bw = rng.random_range(4..=(w / 2));
        let bh = rng.random_range(4..=(h / 2));
        let x = cx.saturating_sub(bw / 2).min(w - bw);
        let y = cy.saturating_sub(bh / 2).min(h - bh);
        BBox::new(x, y, x + bw, y + bh)
    } else {
        random_box(rng, w, h, 4, w / 3, h / 3)
    };
    let sprite = content_sprite(rng, &raw, place)?;
    let (aug, content_mask) = composite_scene(&raw, &sprite, place.x_min, place.y_min)?;
    let overlap = mask_intersection_area(&key_mask, &content_mask)?;
    let obstructed = meets_threshold(overlap, key_mask.area(), opts.alpha);
    Ok(SynthScene {
        raw,
        aug,
        key_object,
        key_mask,
        content_mask,
        obstructed,
    })
}

fn rel(kind: &str, id: &str) -> PathBuf {
    Path::new(kind).join(format!("{id}.png"))
}

/// Writes `n` obstruction scenes plus a manifest into `dir`.
pub fn generate_obstruction_dataset(
    dir: impl AsRef<Path>,
    n: usize,
    seed: u64,
    opts: &SynthOptions,
) -> Result<Manifest, ImagingError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let scene = obstruction_scene(&mut rng, opts)?;
        let id = format!("{i:04}");
        let entry = ObstructionEntry {
            raw: rel("raw", &id),
            aug: rel("aug", &id),
            gt_mask: rel("mask", &id),
            key_object: scene.key_object,
            obstructed: scene.obstructed,
            id,
        };
        write_image(dir, &entry.raw, &scene.raw)?;
        write_image(dir, &entry.aug, &scene.aug)?;
        write_mask(dir, &entry.gt_mask, &scene.key_mask)?;
        samples.push(entry);
    }
    let manifest = Manifest::Obstruction {
        alpha: Some(opts.alpha),
        samples,
    };
    manifest.write(dir)?;
    Ok(manifest)
}

/// Random factor labels; roughly 40% of samples are manipulated.
pub fn random_labels(rng: &mut impl Rng) -> ManipulationLabels {
    let f = if rng.random_bool(0.4) {
        ManipulationFactors::new(true, true, true)
    } else {
        let bits = rng.random_range(0u8..7);
        ManipulationFactors::new(bits & 4 != 0, bits & 2 != 0, bits & 1 != 0)
    };
    ManipulationLabels::from_factors(f)
}

/// Writes `n` manipulation pairs plus a manifest into `dir`. The images are
/// placeholders: content is pasted next to the key object and the labels are
/// drawn at random, so these datasets only exercise the pipeline against
/// scripted transcripts.
pub fn generate_manipulation_dataset(
    dir: impl AsRef<Path>,
    n: usize,
    seed: u64,
    opts: &SynthOptions,
) -> Result<Manifest, ImagingError> {
    check_options(opts)?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let (raw, _, _) = scene_base(&mut rng, opts);
        let place = random_box(&mut rng, opts.width, opts.height, 6, opts.width / 3, opts.height / 3);
        let sprite = content_sprite(&mut rng, &raw, place)?;
        let (aug, _) = composite_scene(&raw, &sprite, place.x_min, place.y_min)?;
        let id = format!("{i:04}");
        let entry = ManipulationEntry {
            raw: rel("raw", &id),
            aug: rel("aug", &id),
            labels: random_labels(&mut rng),
            id,
        };
        write_image(dir, &entry.raw, &raw)?;
        write_image(dir, &entry.aug, &aug)?;
        samples.push(entry);
    }
    let manifest = Manifest::Manipulation { samples };
    manifest.write(dir)?;
    Ok(manifest)
}

/// A frame for the classical baselines: a flat background with one patch of
/// high-contrast random texture. Positive scenes put the content mask over
/// the patch; negative scenes put it over flat background at least 8 px
/// away from the patch.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineScene {
    pub raw: Image,
    pub content_mask: Mask,
    pub texture: BBox,
    pub covers_texture: bool,
}

pub const BASELINE_SIDE: u32 = 64;

pub fn baseline_scene(rng: &mut impl Rng, covers_texture: bool) -> BaselineScene {
    let side = BASELINE_SIDE;
    let mut raw = Image::filled(side, side, random_rgb(rng, 60, 190));
    let tw = rng.random_range(14..=20);
    let th = rng.random_range(14..=20);
    // keep the patch in one half so the other half has room for a negative
    let left = rng.random_bool(0.5);
    let tx = if left {
        rng.random_range(4..=side / 2 - tw)
    } else {
        rng.random_range(side / 2..=side - 4 - tw)
    };
    let ty = rng.random_range(4..=side - 4 - th);
    let texture = BBox::new(tx, ty, tx + tw, ty + th);
    let cell = rng.random_range(1..=2u32);
    let cols = tw.div_ceil(cell);
    let rows = th.div_ceil(cell);
    let bits: Vec<bool> = (0..cols * rows).map(|_| rng.random_bool(0.5)).collect();
    for y in texture.y_min..texture.y_max {
        for x in texture.x_min..texture.x_max {
            let i = ((y - ty) / cell * cols + (x - tx) / cell) as usize;
            raw.put_pixel(x, y, if bits[i] { [250, 250, 250] } else { [5, 5, 5] });
        }
    }
    let content = if covers_texture {
        BBox::new(tx.saturating_sub(1), ty.saturating_sub(1), tx + tw + 1, ty + th + 1)
    } else {
        let w = rng.random_range(8..=14);
        let h = rng.random_range(8..=14);
        let x = if left {
            rng.random_range(side / 2 + 8..=side - w)
        } else {
            rng.random_range(0..=side / 2 - 8 - w)
        };
        let y = rng.random_range(0..=side - h);
        BBox::new(x, y, x + w, y + h)
    };
    BaselineScene {
        raw,
        content_mask: Mask::rect(side, side, content),
        texture,
        covers_texture,
    }
}

/// `n` positives followed by `n` negatives.
pub fn baseline_suite(n: usize, seed: u64) -> Vec<BaselineScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<_> = (0..n).map(|_| baseline_scene(&mut rng, true)).collect();
    out.extend((0..n).map(|_| baseline_scene(&mut rng, false)));
    out
}
