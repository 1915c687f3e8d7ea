//! Parametric hull imagery with an exact fouling mask.
//!
//! A frame is a painted hull: a base antifouling colour with a vertical
//! lighting gradient, an optional faint slime wash (still SLoF 0) and
//! per-pixel noise. Fouling is a union of rotated, textured ellipses that is
//! grown until the painted fraction reaches the requested coverage.

use rand::Rng as _;

use super::{DatasetError, RgbImage};
use crate::rng::{self, tag, Rng};

/// Antifouling paint colours.
const HULL_PALETTE: [[f64; 3]; 5] = [
    [120.0, 32.0, 30.0],
    [34.0, 36.0, 44.0],
    [30.0, 48.0, 92.0],
    [88.0, 90.0, 96.0],
    [60.0, 30.0, 52.0],
];

/// Barnacle, green weed, brown weed, tubeworm.
const FOULING_PALETTE: [[f64; 3]; 4] = [
    [222.0, 214.0, 188.0],
    [62.0, 150.0, 52.0],
    [150.0, 118.0, 46.0],
    [206.0, 168.0, 118.0],
];

const MAX_ELLIPSES: usize = 4096;

/// Hull appearance shared by every frame of one vessel.
#[derive(Clone, Copy, Debug)]
pub struct HullStyle {
    pub base: [f64; 3],
    pub gradient: f64,
}

impl HullStyle {
    pub fn from_seed(seed: u64) -> Self {
        let mut r = rng::stream(seed, &[tag::IMAGE, 0xB0D7]);
        let base = HULL_PALETTE[r.random_range(0..HULL_PALETTE.len())];
        let jitter = r.random_range(0.85..1.15);
        Self {
            base: base.map(|c| c * jitter),
            gradient: r.random_range(0.15..0.45),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticImage {
    pub pixels: RgbImage,
    /// Row-major, true where fouling was painted.
    pub mask: Vec<bool>,
    /// Exact painted fraction of the frame.
    pub coverage: f64,
}

/// Render one frame whose hull style is derived from `seed`.
pub fn generate_synthetic_image(seed: u64, coverage_target: f64, size: usize) -> Result<SyntheticImage, DatasetError> {
    render(seed, coverage_target, size, HullStyle::from_seed(seed))
}

pub fn render(seed: u64, coverage_target: f64, size: usize, hull: HullStyle) -> Result<SyntheticImage, DatasetError> {
    if size < 16 {
        return Err(DatasetError::Invalid(format!("image size {size} is below 16")));
    }
    if !(0.0..=0.9).contains(&coverage_target) {
        return Err(DatasetError::Invalid(format!(
            "coverage target {coverage_target} outside [0, 0.9]"
        )));
    }
    let mut r = rng::stream(seed, &[tag::IMAGE]);
    let n = size * size;
    let mask = paint_mask(&mut r, coverage_target, size);
    let painted = mask.iter().filter(|&&m| m).count();

    let mut img = RgbImage::new(size, size);
    let slime = if r.random_bool(0.5) {
        Some((
            r.random_range(0.0..size as f64),
            r.random_range(0.0..size as f64),
            r.random_range(size as f64 * 0.3..size as f64 * 0.8),
            r.random_range(0.08..0.22),
        ))
    } else {
        None
    };
    let fouling = FOULING_PALETTE[r.random_range(0..FOULING_PALETTE.len())];
    let freq = r.random_range(0.6..1.6);
    let phase = r.random_range(0.0..std::f64::consts::TAU);

    for y in 0..size {
        let shade = 1.0 + hull.gradient * (0.5 - y as f64 / (size - 1) as f64);
        for x in 0..size {
            let mut px = hull.base.map(|c| c * shade);
            if let Some((cx, cy, radius, alpha)) = slime {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if d < radius {
                    let w = alpha * (1.0 - d / radius);
                    let film = [96.0, 104.0, 64.0];
                    for c in 0..3 {
                        px[c] = px[c] * (1.0 - w) + film[c] * w;
                    }
                }
            }
            if mask[y * size + x] {
                let texture = 0.8 + 0.2 * ((x as f64 * freq + phase).sin() * (y as f64 * freq).cos());
                px = fouling.map(|c| c * texture);
            }
            let noise = r.random_range(-10.0..10.0);
            img.put(x, y, px.map(|c| (c + noise).round().clamp(0.0, 255.0) as u8));
        }
    }

    Ok(SyntheticImage {
        pixels: img,
        mask,
        coverage: painted as f64 / n as f64,
    })
}

/// Grow a union of ellipses until the painted pixel count reaches the target.
fn paint_mask(r: &mut Rng, coverage_target: f64, size: usize) -> Vec<bool> {
    let n = size * size;
    let mut mask = vec![false; n];
    if coverage_target == 0.0 {
        return mask;
    }
    let target = ((coverage_target * n as f64).round() as usize).max(1);
    let slack = n / 200;
    let mut painted = 0usize;
    // Fouling clusters around a few settlement points.
    let n_clusters = r.random_range(1..=3);
    let clusters: Vec<(f64, f64)> = (0..n_clusters)
        .map(|_| (r.random_range(0.0..size as f64), r.random_range(0.0..size as f64)))
        .collect();

    for _ in 0..MAX_ELLIPSES {
        if painted > 0 && painted + slack >= target {
            break;
        }
        let remaining = (target - painted) as f64;
        let r_max = (remaining / std::f64::consts::PI)
            .sqrt()
            .min(size as f64 / 4.0)
            .max(1.0);
        let radius = r.random_range(0.6..=1.0) * r_max;
        let a = (radius * r.random_range(0.7..1.4)).max(0.8);
        let b = (radius * r.random_range(0.7..1.4)).max(0.8);
        let theta = r.random_range(0.0..std::f64::consts::PI);
        let (cx0, cy0) = clusters[r.random_range(0..clusters.len())];
        let spread = size as f64 * 0.3;
        let cx = (cx0 + r.random_range(-spread..spread)).rem_euclid(size as f64);
        let cy = (cy0 + r.random_range(-spread..spread)).rem_euclid(size as f64);
        let (sin, cos) = theta.sin_cos();
        let reach = a.max(b).ceil() as isize + 1;
        for dy in -reach..=reach {
            let y = cy.floor() as isize + dy;
            if y < 0 || y >= size as isize {
                continue;
            }
            for dx in -reach..=reach {
                let x = cx.floor() as isize + dx;
                if x < 0 || x >= size as isize {
                    continue;
                }
                let (px, py) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let u = (px * cos + py * sin) / a;
                let v = (-px * sin + py * cos) / b;
                let idx = y as usize * size + x as usize;
                if u * u + v * v <= 1.0 && !mask[idx] && painted < target + slack {
                    mask[idx] = true;
                    painted += 1;
                }
            }
        }
    }
    // Ellipse budget exhausted: top up in raster order so the target is met.
    for m in mask.iter_mut() {
        if painted > 0 && painted + slack >= target {
            break;
        }
        if !*m {
            *m = true;
            painted += 1;
        }
    }
    mask
}
