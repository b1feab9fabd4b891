//! Synthetic scenes with a known object: one bright ellipse on a textured
//! background, small bright speckles as distractors, the exact object mask
//! and scripted markers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::markers::{ImageMarkers, Label, Marker};
use crate::{BinaryMask, MultiChannelImage, Pixel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub speckles: usize,
    pub noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 128,
            height: 128,
            speckles: 24,
            noise_sigma: 0.03,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * c + dy * s) / self.a;
        let v = (-dx * s + dy * c) / self.b;
        u * u + v * v <= 1.0
    }

    /// Point at fraction `t` in [-1, 1] along the major axis.
    fn axis_point(&self, t: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (self.cx + t * self.a * c, self.cy + t * self.a * s)
    }
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub id: String,
    /// RGB in [0, 1].
    pub image: MultiChannelImage,
    pub mask: BinaryMask,
    pub ellipse: Ellipse,
    pub markers: ImageMarkers,
}

const OBJECT: [f64; 3] = [0.92, 0.78, 0.35];
const BACKGROUND: [f64; 3] = [0.22, 0.30, 0.38];

pub fn generate_scene(id: &str, seed: u64, cfg: &SynthConfig) -> SynthScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let ellipse = Ellipse {
        cx: rng.random_range(0.35 * w..0.65 * w),
        cy: rng.random_range(0.35 * h..0.65 * h),
        a: rng.random_range(0.10 * w..0.17 * w),
        b: rng.random_range(0.07 * h..0.12 * h),
        theta: rng.random_range(0.0..std::f64::consts::PI),
    };
    let mask = BinaryMask::from_fn(cfg.width, cfg.height, |x, y| ellipse.contains(x as f64, y as f64));

    // speckles of radius 1 or 2 away from the object
    let mut speckle = BinaryMask::new(cfg.width, cfg.height);
    let mut placed = 0;
    while placed < cfg.speckles {
        let sx = rng.random_range(2..cfg.width - 2);
        let sy = rng.random_range(2..cfg.height - 2);
        let r = rng.random_range(1..=2i64) as isize;
        if mask.foreground().any(|p| p.x.abs_diff(sx) < 8 && p.y.abs_diff(sy) < 8) {
            continue;
        }
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    speckle.set((sx as isize + dx) as usize, (sy as isize + dy) as usize, true);
                }
            }
        }
        placed += 1;
    }

    let noise = Normal::new(0.0, cfg.noise_sigma).expect("finite sigma");
    let tilt: f64 = rng.random_range(-0.08..0.08);
    let image = MultiChannelImage::from_fn(cfg.width, cfg.height, 3, |x, y, c| {
        let base = if mask.get(x, y) || speckle.get(x, y) {
            OBJECT[c]
        } else {
            BACKGROUND[c] + tilt * (x as f64 / w - 0.5)
        };
        (base + noise.sample(&mut rng)).clamp(0.0, 1.0)
    });

    let markers = scripted_markers(id, cfg, &ellipse, &mask);
    SynthScene {
        id: id.to_string(),
        image,
        mask,
        ellipse,
        markers,
    }
}

/// A foreground stroke along the central half of the major axis and two
/// background strokes: a horizontal line near the top and a vertical line
/// near the left, both skipping object pixels.
fn scripted_markers(id: &str, cfg: &SynthConfig, e: &Ellipse, mask: &BinaryMask) -> ImageMarkers {
    let mut fg = Vec::new();
    for i in 0..=40 {
        let (x, y) = e.axis_point(-0.5 + i as f64 / 40.0);
        let p = Pixel::new(x.round() as usize, y.round() as usize);
        if mask.get(p.x, p.y) && !fg.contains(&p) {
            fg.push(p);
        }
    }
    let band = |horizontal: bool| -> Vec<Pixel> {
        let n = if horizontal { cfg.width } else { cfg.height };
        (4..n - 4)
            .map(|i| if horizontal { Pixel::new(i, 6) } else { Pixel::new(6, i) })
            .filter(|p| !mask.get(p.x, p.y))
            .collect()
    };
    ImageMarkers {
        image_id: id.to_string(),
        width: cfg.width,
        height: cfg.height,
        markers: vec![
            Marker {
                id: 1,
                label: Label::Foreground,
                pixels: fg,
            },
            Marker {
                id: 2,
                label: Label::Background,
                pixels: band(true),
            },
            Marker {
                id: 3,
                label: Label::Background,
                pixels: band(false),
            },
        ],
    }
}

/// `n` scenes named `synth_000`, `synth_001`, ... with seeds derived from `seed`.
pub fn generate_suite(n: usize, seed: u64, cfg: &SynthConfig) -> Vec<SynthScene> {
    (0..n)
        .map(|i| generate_scene(&format!("synth_{i:03}"), crate::derive_seed(seed, &[i as u64]), cfg))
        .collect()
}

/// Piecewise-constant Lab image: a rectangle of one color on another, plus
/// optional Gaussian noise. Returns the image and the rectangle mask.
pub fn two_region_lab(
    width: usize,
    height: usize,
    contrast: f64,
    sigma: f64,
    seed: u64,
) -> (MultiChannelImage, BinaryMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = rng.random_range(width / 5..width / 3);
    let y0 = rng.random_range(height / 5..height / 3);
    let x1 = rng.random_range(2 * width / 3..4 * width / 5);
    let y1 = rng.random_range(2 * height / 3..4 * height / 5);
    let mask = BinaryMask::from_fn(width, height, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y));
    let bg = [
        rng.random_range(30.0..60.0),
        rng.random_range(-20.0..20.0),
        rng.random_range(-20.0..20.0),
    ];
    // unit direction for the color offset
    let dir = {
        let v: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-9);
        v.map(|c| c / n)
    };
    let fg = [bg[0] + contrast * dir[0], bg[1] + contrast * dir[1], bg[2] + contrast * dir[2]];
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let img = MultiChannelImage::from_fn(width, height, 3, |x, y, c| {
        let base = if mask.get(x, y) { fg[c] } else { bg[c] };
        if sigma > 0.0 {
            base + noise.sample(&mut rng)
        } else {
            base
        }
    });
    (img, mask)
}
