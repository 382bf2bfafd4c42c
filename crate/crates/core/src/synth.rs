//! Procedural stereo pairs with exact integer-disparity ground truth.
//!
//! Every layer (the background and each rectangle) carries its own hashed
//! texture defined in left-image coordinates, so the right view is an exact
//! per-layer shift and occlusion follows from a z-buffer on disparity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LabeledSample;
use crate::mask::Mask;
use crate::model::StereoPair;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub disparity: u32,
}

impl SynthRect {
    fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x as i64 && x < (self.x + self.w) as i64 && y >= self.y as i64 && y < (self.y + self.h) as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureParams {
    /// Cell sizes of the value-noise octaves, in pixels.
    pub cells: [u32; 3],
    /// Blend weights of the octaves.
    pub weights: [f64; 3],
    pub contrast: f64,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            cells: [2, 5, 11],
            weights: [0.5, 0.3, 0.2],
            contrast: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthScene {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub ndisp: usize,
    pub background_disparity: u32,
    pub rects: Vec<SynthRect>,
    pub texture: TextureParams,
}

/// Inclusive disparity range used by [`SynthScene::random`].
pub fn disparity_range(ndisp: usize) -> (u32, u32) {
    ((ndisp / 8) as u32, (3 * ndisp / 4) as u32)
}

impl SynthScene {
    /// A single fronto-parallel plane at disparity `d`.
    pub fn plane(seed: u64, width: usize, height: usize, ndisp: usize, d: u32) -> Self {
        Self {
            seed,
            width,
            height,
            ndisp,
            background_disparity: d,
            rects: Vec::new(),
            texture: TextureParams::default(),
        }
    }

    /// Background plus one to four rectangles, disparities drawn from
    /// [`disparity_range`].
    pub fn random(seed: u64, width: usize, height: usize, ndisp: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = disparity_range(ndisp);
        let background_disparity = rng.random_range(lo..=hi);
        let k = rng.random_range(1..=4);
        let rects = (0..k)
            .map(|_| {
                let w = rng.random_range((width / 8).max(1)..=(width / 2).max(1));
                let h = rng.random_range((height / 8).max(1)..=(height / 2).max(1));
                SynthRect {
                    x: rng.random_range(0..=width - w),
                    y: rng.random_range(0..=height - h),
                    w,
                    h,
                    disparity: rng.random_range(lo..=hi),
                }
            })
            .collect();
        Self {
            seed,
            width,
            height,
            ndisp,
            background_disparity,
            rects,
            texture: TextureParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("scene dimensions must be non-zero"));
        }
        let in_range = |d: u32| (d as usize) < self.ndisp;
        if !in_range(self.background_disparity) {
            return Err(Error::invalid("background disparity outside [0, ndisp)"));
        }
        for r in &self.rects {
            if !in_range(r.disparity) || r.w == 0 || r.h == 0 || r.x + r.w > self.width || r.y + r.h > self.height {
                return Err(Error::invalid(format!("rectangle {r:?} violates scene bounds")));
            }
        }
        Ok(())
    }

    /// Layer visible at left-view pixel `(x, y)`: index 0 is the background,
    /// `i + 1` is rectangle `i`. Nearer (larger disparity) layers win; ties
    /// go to the later rectangle.
    fn layer_at_left(&self, x: i64, y: i64) -> (usize, u32) {
        let mut best = (0, self.background_disparity);
        for (i, r) in self.rects.iter().enumerate() {
            if r.contains(x, y) && r.disparity >= best.1 {
                best = (i + 1, r.disparity);
            }
        }
        best
    }

    /// Layer visible at right-view pixel `(xr, y)`.
    fn layer_at_right(&self, xr: i64, y: i64) -> (usize, u32) {
        let mut best = (0, self.background_disparity);
        for (i, r) in self.rects.iter().enumerate() {
            if r.contains(xr + r.disparity as i64, y) && r.disparity >= best.1 {
                best = (i + 1, r.disparity);
            }
        }
        best
    }

    fn texel(&self, layer: usize, c: usize, x: i64, y: i64) -> f32 {
        let t = &self.texture;
        let mut v = 0.0;
        for (o, (&cell, &w)) in t.cells.iter().zip(&t.weights).enumerate() {
            let key = [self.seed, layer as u64, c as u64, o as u64];
            v += w * value_noise(key, x as f64 / cell as f64, y as f64 / cell as f64);
        }
        let v = 0.5 + t.contrast * (v - 0.5);
        (v.clamp(0.0, 1.0) * 255.0).round() as f32 / 255.0
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(key: [u64; 4], ix: i64, iy: i64) -> f64 {
    let mut h = 0u64;
    for v in key.into_iter().chain([ix as u64, iy as u64]) {
        h = splitmix(h ^ v);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(key: [u64; 4], u: f64, v: f64) -> f64 {
    let (fu, fv) = (u.floor(), v.floor());
    let (tu, tv) = (u - fu, v - fv);
    let (su, sv) = (tu * tu * (3.0 - 2.0 * tu), tv * tv * (3.0 - 2.0 * tv));
    let (ix, iy) = (fu as i64, fv as i64);
    let a = lattice(key, ix, iy);
    let b = lattice(key, ix + 1, iy);
    let c = lattice(key, ix, iy + 1);
    let d = lattice(key, ix + 1, iy + 1);
    let top = a + (b - a) * su;
    let bot = c + (d - c) * su;
    top + (bot - top) * sv
}

/// Renders `scene`. Values are multiples of 1/255 so the pair survives an
/// 8-bit PNG round trip exactly. Invalid ground-truth pixels hold 0.
pub fn synth_pair(scene: &SynthScene) -> Result<LabeledSample<f32>> {
    scene.validate()?;
    let (w, h) = (scene.width, scene.height);
    let mut left = Tensor::zeros(&[3, h, w]);
    let mut right = Tensor::zeros(&[3, h, w]);
    let mut gt = Tensor::zeros(&[h, w]);
    let mut valid = Mask::filled(h, w, false);
    for y in 0..h {
        for x in 0..w {
            let (yi, xi) = (y as i64, x as i64);
            let (ll, dl) = scene.layer_at_left(xi, yi);
            let (lr, dr) = scene.layer_at_right(xi, yi);
            for c in 0..3 {
                left.set(&[c, y, x], scene.texel(ll, c, xi, yi));
                right.set(&[c, y, x], scene.texel(lr, c, xi + dr as i64, yi));
            }
            let xr = xi - dl as i64;
            if xr >= 0 && scene.layer_at_right(xr, yi).0 == ll {
                gt.set(&[y, x], dl as f32);
                valid.set(y, x, true);
            }
        }
    }
    LabeledSample::new(StereoPair::new(left, right)?, gt, valid)
}
