use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LabeledSample;
use crate::model::StereoPair;
use crate::real::Real;
use crate::tensor::Tensor;

/// Minimum fraction of valid ground-truth pixels a crop must contain.
pub const MIN_VALID_FRACTION: f64 = 0.01;
/// Crop placements tried before the last one is accepted regardless.
pub const CROP_TRIES: usize = 10;

pub const JITTER_GAIN: (f64, f64) = (0.8, 1.25);
pub const JITTER_OFFSET: f64 = 0.05;
pub const NOISE_SIGMA_MAX: f64 = 0.02;
pub const BLUR_SIGMA_MAX: f64 = 1.0;
pub const SHIFT_MAX: usize = 2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentFlags {
    pub flip: bool,
    pub color_jitter: bool,
    pub noise: bool,
    pub blur: bool,
    /// Horizontal shift of the right view that lowers every disparity by
    /// the same integer amount.
    pub shift: bool,
}

impl AugmentFlags {
    pub fn all() -> Self {
        Self {
            flip: true,
            color_jitter: true,
            noise: true,
            blur: true,
            shift: true,
        }
    }

    /// Parses a comma-separated list of `flip`, `jitter`, `noise`, `blur`, `shift`.
    pub fn parse(list: &str) -> Result<Self> {
        let mut f = Self::default();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "flip" => f.flip = true,
                "jitter" | "color_jitter" => f.color_jitter = true,
                "noise" => f.noise = true,
                "blur" => f.blur = true,
                "shift" => f.shift = true,
                other => return Err(Error::invalid(format!("unknown augmentation `{other}`"))),
            }
        }
        Ok(f)
    }
}

fn flip_image<T: Real>(img: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (img.shape()[1], img.shape()[2]);
    Tensor::from_fn(img.shape(), |i| {
        let (ch, y, x) = (i / (h * w), (i / w) % h, i % w);
        img.data()[(ch * h + (h - 1 - y)) * w + x]
    })
}

fn flip_map<T: Real>(map: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    Tensor::from_fn(&[h, w], |i| map.data()[(h - 1 - i / w) * w + i % w])
}

/// Mirrors the pair, ground truth and mask top to bottom.
pub fn flip_vertical<T: Real>(s: &LabeledSample<T>) -> LabeledSample<T> {
    LabeledSample {
        pair: StereoPair {
            left: flip_image(&s.pair.left),
            right: flip_image(&s.pair.right),
        },
        gt_disparity: flip_map(&s.gt_disparity),
        valid_mask: s.valid_mask.flip_vertical(),
    }
}

/// Moves the right view `k` pixels to the right (replicating its first
/// column) and subtracts `k` from the ground truth, keeping the pair exact.
pub fn shift_disparity<T: Real>(s: &LabeledSample<T>, k: usize) -> LabeledSample<T> {
    if k == 0 {
        return s.clone();
    }
    let r = &s.pair.right;
    let (h, w) = (r.shape()[1], r.shape()[2]);
    let right = Tensor::from_fn(r.shape(), |i| {
        let (row, x) = (i / w, i % w);
        r.data()[row * w + x.saturating_sub(k)]
    });
    let dk = T::of(k as f64);
    let gt = Tensor::from_fn(&[h, w], |i| {
        if s.valid_mask.data()[i] {
            s.gt_disparity.data()[i] - dk
        } else {
            s.gt_disparity.data()[i]
        }
    });
    LabeledSample {
        pair: StereoPair {
            left: s.pair.left.clone(),
            right,
        },
        gt_disparity: gt,
        valid_mask: s.valid_mask.clone(),
    }
}

/// Largest shift up to [`SHIFT_MAX`] that keeps every valid disparity
/// non-negative.
fn max_shift<T: Real>(s: &LabeledSample<T>) -> usize {
    s.gt_disparity
        .data()
        .iter()
        .zip(s.valid_mask.data())
        .filter(|(_, &m)| m)
        .map(|(d, _)| d.as_f64())
        .fold(f64::INFINITY, f64::min)
        .floor()
        .clamp(0.0, SHIFT_MAX as f64) as usize
}

fn clamp01<T: Real>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

fn jitter<T: Real>(img: &mut Tensor<T>, gain: &[f64; 3], offset: &[f64; 3]) {
    let plane = img.shape()[1] * img.shape()[2];
    for (i, v) in img.data_mut().iter_mut().enumerate() {
        let c = (i / plane).min(2);
        *v = clamp01(T::of(v.as_f64() * gain[c] + offset[c]));
    }
}

fn add_noise<T: Real>(img: &mut Tensor<T>, sigma: f64, rng: &mut impl Rng) {
    if sigma <= 0.0 {
        return;
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    for v in img.data_mut() {
        *v = clamp01(T::of(v.as_f64() + n.sample(rng)));
    }
}

/// Separable Gaussian blur with clamped borders; identity for `sigma == 0`.
pub fn gaussian_blur<T: Real>(img: &Tensor<T>, sigma: f64) -> Tensor<T> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let z: f64 = k.iter().sum();
    let k: Vec<f64> = k.into_iter().map(|v| v / z).collect();
    let s = img.shape().to_vec();
    let (c, h, w) = (s[0], s[1] as isize, s[2] as isize);
    let src = img.data();
    let mut tmp = vec![0.0f64; src.len()];
    for ch in 0..c {
        let base = ch * (h * w) as usize;
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (j, kv) in k.iter().enumerate() {
                    let xx = (x + j as isize - r).clamp(0, w - 1);
                    acc += kv * src[base + (y * w + xx) as usize].as_f64();
                }
                tmp[base + (y * w + x) as usize] = acc;
            }
        }
    }
    let mut out = vec![T::zero(); src.len()];
    for ch in 0..c {
        let base = ch * (h * w) as usize;
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (j, kv) in k.iter().enumerate() {
                    let yy = (y + j as isize - r).clamp(0, h - 1);
                    acc += kv * tmp[base + (yy * w + x) as usize];
                }
                out[base + (y * w + x) as usize] = T::of(acc);
            }
        }
    }
    Tensor::new(&s, out).expect("same shape")
}

/// Applies the enabled augmentations. Photometric parameters are shared
/// by both views; noise is drawn independently per pixel.
pub fn augment<T: Real>(sample: &LabeledSample<T>, flags: &AugmentFlags, rng: &mut impl Rng) -> LabeledSample<T> {
    let mut s = sample.clone();
    if flags.flip && rng.random_bool(0.5) {
        s = flip_vertical(&s);
    }
    if flags.shift {
        let k = rng.random_range(0..=max_shift(&s));
        s = shift_disparity(&s, k);
    }
    if flags.color_jitter {
        let gain: [f64; 3] = std::array::from_fn(|_| rng.random_range(JITTER_GAIN.0..=JITTER_GAIN.1));
        let offset: [f64; 3] = std::array::from_fn(|_| rng.random_range(-JITTER_OFFSET..=JITTER_OFFSET));
        jitter(&mut s.pair.left, &gain, &offset);
        jitter(&mut s.pair.right, &gain, &offset);
    }
    if flags.noise {
        let sigma = rng.random_range(0.0..=NOISE_SIGMA_MAX);
        add_noise(&mut s.pair.left, sigma, rng);
        add_noise(&mut s.pair.right, sigma, rng);
    }
    if flags.blur {
        let sigma = rng.random_range(0.0..=BLUR_SIGMA_MAX);
        s.pair.left = gaussian_blur(&s.pair.left, sigma);
        s.pair.right = gaussian_blur(&s.pair.right, sigma);
    }
    s
}

fn crop_image<T: Real>(img: &Tensor<T>, y0: usize, x0: usize, h: usize, w: usize) -> Tensor<T> {
    let (c, ih, iw) = (img.shape()[0], img.shape()[1], img.shape()[2]);
    let data = (0..c * h * w)
        .map(|i| {
            let (ch, y, x) = (i / (h * w), (i / w) % h, i % w);
            img.data()[(ch * ih + y0 + y) * iw + x0 + x]
        })
        .collect();
    Tensor::new(&[c, h, w], data).expect("crop shape")
}

/// Cuts an `h x w` window at a uniformly random position, resampling up
/// to [`CROP_TRIES`] times until at least [`MIN_VALID_FRACTION`] of the
/// window has valid ground truth.
pub fn random_crop<T: Real>(
    sample: &LabeledSample<T>,
    h: usize,
    w: usize,
    rng: &mut impl Rng,
) -> Result<LabeledSample<T>> {
    let (ih, iw) = (sample.pair.height(), sample.pair.width());
    if h == 0 || w == 0 || h > ih || w > iw {
        return Err(Error::invalid(format!("crop {w}x{h} does not fit image {iw}x{ih}")));
    }
    let mut pos = (0, 0);
    for _ in 0..CROP_TRIES {
        pos = (rng.random_range(0..=ih - h), rng.random_range(0..=iw - w));
        let valid = sample.valid_mask.crop(pos.0, pos.1, h, w).count();
        if valid as f64 >= MIN_VALID_FRACTION * (h * w) as f64 {
            break;
        }
    }
    let (y0, x0) = pos;
    let gt = &sample.gt_disparity;
    Ok(LabeledSample {
        pair: StereoPair {
            left: crop_image(&sample.pair.left, y0, x0, h, w),
            right: crop_image(&sample.pair.right, y0, x0, h, w),
        },
        gt_disparity: Tensor::from_fn(&[h, w], |i| gt.data()[(y0 + i / w) * iw + x0 + i % w]),
        valid_mask: sample.valid_mask.crop(y0, x0, h, w),
    })
}
