//! Desk-scale stand-in for a few-shot benchmark.
//!
//! Class `c` has hue bin `c % 10` (36° apart), lightness band `(c / 10) % 2`
//! and shape `c % 3` (disc, bar, ring). Every image jitters position, scale,
//! hue, lightness and adds pixel noise on a neutral gray background. Classes
//! with `c % 4 == 3` form the test split and `c % 4 == 1` the validation
//! split, so every held-out class has a distinct hue.

use image::{Rgb, RgbImage};
use metalab_colorspace::{lab_to_srgb, lch_to_lab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{ClassImages, Dataset, EpisodicError, Result, Split};

pub const HUE_BINS: usize = 10;
pub const LIGHTNESS_BANDS: [f64; 2] = [45.0, 72.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOptions {
    pub hue_jitter_deg: f64,
    /// Relative lightness jitter.
    pub lightness_jitter: f64,
    pub noise_sigma: f64,
    pub background_l: f64,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions { hue_jitter_deg: 10.0, lightness_jitter: 0.10, noise_sigma: 0.02, background_l: 25.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Disc,
    Bar,
    Ring,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassSignature {
    pub hue_deg: f64,
    pub lightness: f64,
    pub chroma: f64,
    pub shape: Shape,
}

pub fn class_signature(class: usize) -> ClassSignature {
    ClassSignature {
        hue_deg: (class % HUE_BINS) as f64 * 360.0 / HUE_BINS as f64,
        lightness: LIGHTNESS_BANDS[(class / HUE_BINS) % 2],
        chroma: 30.0 + ((class * 7) % 11) as f64,
        shape: [Shape::Disc, Shape::Bar, Shape::Ring][class % 3],
    }
}

/// sRGB of the given LCh color, with chroma lowered until it fits the gamut
/// so that hue and lightness survive.
fn in_gamut(light: f64, chroma: f64, hue: f64) -> [f64; 3] {
    let mut c = chroma;
    loop {
        let rgb = lab_to_srgb(lch_to_lab(light, c, hue));
        if c <= 0.0 || rgb.iter().all(|v| (0.0..=1.0).contains(v)) {
            return rgb.map(|v| v.clamp(0.0, 1.0));
        }
        c -= 0.5;
    }
}

fn render(sig: &ClassSignature, size: usize, opts: &SyntheticOptions, rng: &mut ChaCha8Rng) -> RgbImage {
    let s = size as f64;
    let hue = sig.hue_deg + rng.random_range(-opts.hue_jitter_deg..=opts.hue_jitter_deg);
    let light = sig.lightness * (1.0 + rng.random_range(-opts.lightness_jitter..=opts.lightness_jitter));
    let fg = in_gamut(light, sig.chroma, hue);
    let bg = lab_to_srgb([opts.background_l, 0.0, 0.0]);
    let radius = s * rng.random_range(0.22..0.32);
    let cx = s / 2.0 + s * rng.random_range(-0.12..0.12);
    let cy = s / 2.0 + s * rng.random_range(-0.12..0.12);
    let horizontal = rng.random_bool(0.5);
    let noise = Normal::new(0.0, opts.noise_sigma).expect("valid sigma");
    RgbImage::from_fn(size as u32, size as u32, |x, y| {
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        let r = dx.hypot(dy);
        let inside = match sig.shape {
            Shape::Disc => r <= radius,
            Shape::Ring => r <= radius && r >= 0.55 * radius,
            Shape::Bar => {
                let (along, across) = if horizontal { (dx, dy) } else { (dy, dx) };
                along.abs() <= radius && across.abs() <= 0.35 * radius
            }
        };
        let base = if inside { fg } else { bg };
        Rgb(base.map(|c| ((c + noise.sample(rng)).clamp(0.0, 1.0) * 255.0).round() as u8))
    })
}

/// `classes × per_class` images of side `size`, split by class index.
pub fn make_synthetic_dataset(classes: usize, per_class: usize, size: usize, seed: u64) -> Result<Dataset> {
    make_synthetic_dataset_with(classes, per_class, size, seed, &SyntheticOptions::default())
}

pub fn make_synthetic_dataset_with(
    classes: usize,
    per_class: usize,
    size: usize,
    seed: u64,
    opts: &SyntheticOptions,
) -> Result<Dataset> {
    if classes < 10 {
        return Err(EpisodicError::Config(format!("synthetic data needs at least 10 classes, got {classes}")));
    }
    if per_class == 0 || size < 8 {
        return Err(EpisodicError::Config(format!("per_class {per_class} and size {size} are too small")));
    }
    let mut splits = [Split::default(), Split::default(), Split::default()];
    for class in 0..classes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class as u64);
        let sig = class_signature(class);
        let images = (0..per_class).map(|_| render(&sig, size, opts, &mut rng)).collect();
        let split = match class % 4 {
            3 => 2,
            1 => 1,
            _ => 0,
        };
        splits[split].classes.push(ClassImages { name: format!("class_{class:03}"), images });
    }
    let [train, val, test] = splits;
    Ok(Dataset { train, val, test, size })
}
