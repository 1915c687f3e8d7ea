//! Label-preserving augmentation: quarter-turn rotations, horizontal flips,
//! crop-and-resize and brightness/contrast jitter.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::RgbImage;
use crate::rng::{self, tag};

/// Which transforms to compose. Applied in the order rotate, flip, crop, colour.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub rotate: bool,
    pub flip: bool,
    pub crop: bool,
    pub color: bool,
}

impl AugmentPolicy {
    pub const IDENTITY: Self = Self {
        rotate: false,
        flip: false,
        crop: false,
        color: false,
    };
    /// Geometric transforms only.
    pub const LIGHT: Self = Self {
        rotate: true,
        flip: true,
        crop: false,
        color: false,
    };
    pub const HEAVY: Self = Self {
        rotate: true,
        flip: true,
        crop: true,
        color: true,
    };

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

/// Smallest retained crop area, as a fraction of the frame.
pub const MIN_CROP_AREA: f64 = 0.8;
/// Maximum relative brightness and contrast change.
pub const COLOR_JITTER: f64 = 0.2;

pub fn augment(img: &RgbImage, seed: u64, policy: &AugmentPolicy) -> RgbImage {
    if policy.is_identity() {
        return img.clone();
    }
    let mut r = rng::stream(seed, &[tag::AUGMENT]);
    let mut out = img.clone();
    if policy.rotate {
        out = rotate_quarter_turns(&out, r.random_range(0..4));
    }
    if policy.flip && r.random_bool(0.5) {
        out = flip_horizontal(&out);
    }
    if policy.crop {
        let area = r.random_range(MIN_CROP_AREA..=1.0);
        let (w, h) = (out.width(), out.height());
        let cw = ((w as f64 * area.sqrt()).ceil() as usize).clamp(1, w);
        let ch = ((h as f64 * area.sqrt()).ceil() as usize).clamp(1, h);
        let x0 = r.random_range(0..=w - cw);
        let y0 = r.random_range(0..=h - ch);
        out = crop_resize(&out, x0, y0, cw, ch);
    }
    if policy.color {
        let brightness = 1.0 + r.random_range(-COLOR_JITTER..=COLOR_JITTER);
        let contrast = 1.0 + r.random_range(-COLOR_JITTER..=COLOR_JITTER);
        out = jitter_color(&out, brightness, contrast);
    }
    out
}

/// Rotate counter-clockwise by `k` quarter turns.
pub fn rotate_quarter_turns(img: &RgbImage, k: u32) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let k = k % 4;
    if k == 0 {
        return img.clone();
    }
    let (ow, oh) = if k.is_multiple_of(2) { (w, h) } else { (h, w) };
    let mut out = RgbImage::new(ow, oh);
    for y in 0..h {
        for x in 0..w {
            let (nx, ny) = match k {
                1 => (y, w - 1 - x),
                2 => (w - 1 - x, h - 1 - y),
                _ => (h - 1 - y, x),
            };
            out.put(nx, ny, img.get(x, y));
        }
    }
    out
}

pub fn flip_horizontal(img: &RgbImage) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let mut out = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            out.put(w - 1 - x, y, img.get(x, y));
        }
    }
    out
}

/// Crop a window and resize it back to the input size (nearest neighbour).
pub fn crop_resize(img: &RgbImage, x0: usize, y0: usize, cw: usize, ch: usize) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let mut out = RgbImage::new(w, h);
    for y in 0..h {
        let sy = y0 + (y * ch) / h;
        for x in 0..w {
            let sx = x0 + (x * cw) / w;
            out.put(x, y, img.get(sx, sy));
        }
    }
    out
}

/// `out = (mean + (px - mean) * contrast) * brightness`, per channel.
pub fn jitter_color(img: &RgbImage, brightness: f64, contrast: f64) -> RgbImage {
    let raw = img.as_raw();
    let mut mean = [0.0f64; 3];
    for px in raw.chunks_exact(3) {
        for c in 0..3 {
            mean[c] += f64::from(px[c]);
        }
    }
    let n = (raw.len() / 3).max(1) as f64;
    let mean = mean.map(|m| m / n);
    let data = raw
        .chunks_exact(3)
        .flat_map(|px| {
            let mut o = [0u8; 3];
            for c in 0..3 {
                let v = (mean[c] + (f64::from(px[c]) - mean[c]) * contrast) * brightness;
                o[c] = v.round().clamp(0.0, 255.0) as u8;
            }
            o
        })
        .collect();
    RgbImage::from_raw(img.width(), img.height(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic_image;

    fn sample() -> RgbImage {
        generate_synthetic_image(3, 0.2, 32).unwrap().pixels
    }

    #[test]
    fn identity_policy_is_a_no_op() {
        let img = sample();
        assert_eq!(augment(&img, 9, &AugmentPolicy::IDENTITY), img);
    }

    #[test]
    fn half_turn_is_an_involution() {
        let img = sample();
        let twice = rotate_quarter_turns(&rotate_quarter_turns(&img, 2), 2);
        assert_eq!(twice, img);
        let four = (0..4).fold(img.clone(), |acc, _| rotate_quarter_turns(&acc, 1));
        assert_eq!(four, img);
        assert_eq!(flip_horizontal(&flip_horizontal(&img)), img);
    }

    #[test]
    fn quarter_turn_moves_corners() {
        let mut img = RgbImage::new(3, 2);
        img.put(2, 0, [9, 9, 9]);
        let r = rotate_quarter_turns(&img, 1);
        assert_eq!((r.width(), r.height()), (2, 3));
        assert_eq!(r.get(0, 0), [9, 9, 9]);
    }

    #[test]
    fn crop_policy_keeps_dimensions() {
        let img = sample();
        let policy = AugmentPolicy {
            crop: true,
            ..AugmentPolicy::IDENTITY
        };
        for seed in 0..20 {
            let out = augment(&img, seed, &policy);
            assert_eq!((out.width(), out.height()), (img.width(), img.height()));
        }
    }

    #[test]
    fn augmentation_is_deterministic() {
        let img = sample();
        let a = augment(&img, 77, &AugmentPolicy::HEAVY);
        assert_eq!(a, augment(&img, 77, &AugmentPolicy::HEAVY));
    }

    #[test]
    fn color_jitter_bounds() {
        let img = sample();
        assert_eq!(jitter_color(&img, 1.0, 1.0), img);
        let dark = jitter_color(&img, 0.8, 1.0);
        let before: u64 = img.as_raw().iter().map(|&v| u64::from(v)).sum();
        let after: u64 = dark.as_raw().iter().map(|&v| u64::from(v)).sum();
        assert!(after < before);
    }
}
