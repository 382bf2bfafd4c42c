//! Image and dataset IO plus the padded inference path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LabeledSample;
use crate::mask::Mask;
use crate::model::{forward, ModelConfig, StereoPair, WeightSet};
use crate::pfm::{load_pfm, save_pfm};
use crate::postproc::{confidence_from_matchability, filter_disparity, upsample_nearest, FilteredDisparity};
use crate::tensor::Tensor;

/// Loads an image as `[3,H,W]` RGB in `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_owned(),
            source,
        })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    Ok(Tensor::from_fn(&[3, h, w], |i| {
        let (c, p) = (i / (h * w), i % (h * w));
        raw[p * 3 + c] as f32 / 255.0
    }))
}

/// Writes a `[3,H,W]` image in `[0, 1]` as 8-bit PNG.
pub fn save_image(path: impl AsRef<Path>, img: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    if img.rank() != 3 || img.shape()[0] != 3 {
        return Err(Error::shape(format!("expected [3,H,W], got {:?}", img.shape())));
    }
    let (h, w) = (img.shape()[1], img.shape()[2]);
    let mut raw = vec![0u8; 3 * h * w];
    for (i, px) in raw.iter_mut().enumerate() {
        let (p, c) = (i / 3, i % 3);
        *px = (img.data()[c * h * w + p].clamp(0.0, 1.0) * 255.0).round() as u8;
    }
    image::save_buffer(path, &raw, w as u32, h as u32, image::ExtendedColorType::Rgb8).map_err(|source| Error::Image {
        path: path.to_owned(),
        source,
    })
}

/// Ground truth with invalid pixels as NaN.
pub fn disparity_with_nan(sample: &LabeledSample<f32>) -> Tensor<f32> {
    let mut d = sample.gt_disparity.clone();
    for (v, &ok) in d.data_mut().iter_mut().zip(sample.valid_mask.data()) {
        if !ok {
            *v = f32::NAN;
        }
    }
    d
}

/// Writes `dir/NNNN/{left.png,right.png,disp.pfm}`.
pub fn save_sample(dir: impl AsRef<Path>, index: usize, sample: &LabeledSample<f32>) -> Result<PathBuf> {
    let sub = dir.as_ref().join(format!("{index:04}"));
    std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    save_image(sub.join("left.png"), &sample.pair.left)?;
    save_image(sub.join("right.png"), &sample.pair.right)?;
    save_pfm(sub.join("disp.pfm"), &disparity_with_nan(sample))?;
    Ok(sub)
}

/// Reads one sample directory; non-finite disparities are invalid.
pub fn load_sample(dir: impl AsRef<Path>) -> Result<LabeledSample<f32>> {
    let dir = dir.as_ref();
    let pair = StereoPair::new(load_image(dir.join("left.png"))?, load_image(dir.join("right.png"))?)?;
    let raw = load_pfm(dir.join("disp.pfm"))?;
    let (h, w) = (raw.shape()[0], raw.shape()[1]);
    let valid = Mask::new(h, w, raw.data().iter().map(|v| v.is_finite()).collect())?;
    let gt = raw.map(|v| if v.is_finite() { v } else { 0.0 });
    LabeledSample::new(pair, gt, valid)
}

/// Loads every sample subdirectory of `dir` in name order.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<LabeledSample<f32>>> {
    let dir = dir.as_ref();
    let mut subs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("disp.pfm").is_file())
        .collect();
    subs.sort();
    if subs.is_empty() {
        return Err(Error::invalid(format!("{} contains no samples", dir.display())));
    }
    subs.iter().map(load_sample).collect()
}

/// Symmetric zero padding applied before the network.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    /// Smallest symmetric padding that makes `h x w` divisible by `multiple`.
    pub fn to_multiple(h: usize, w: usize, multiple: usize) -> Self {
        let ph = (multiple - h % multiple) % multiple;
        let pw = (multiple - w % multiple) % multiple;
        Self {
            top: ph / 2,
            bottom: ph - ph / 2,
            left: pw / 2,
            right: pw - pw / 2,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }

    fn pad(&self, img: &Tensor<f32>) -> Tensor<f32> {
        let (c, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2]);
        let (ho, wo) = (h + self.top + self.bottom, w + self.left + self.right);
        let mut out = Tensor::zeros(&[c, ho, wo]);
        for ch in 0..c {
            for y in 0..h {
                let src = &img.data()[(ch * h + y) * w..(ch * h + y + 1) * w];
                let dst = (ch * ho + y + self.top) * wo + self.left;
                out.data_mut()[dst..dst + w].copy_from_slice(src);
            }
        }
        out
    }

    fn crop(&self, map: &Tensor<f32>, h: usize, w: usize) -> Tensor<f32> {
        let wo = map.shape()[1];
        Tensor::from_fn(&[h, w], |i| map.data()[(i / w + self.top) * wo + i % w + self.left])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferOptions {
    pub conf_threshold: f64,
    pub min_region: usize,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self {
            conf_threshold: crate::postproc::DEFAULT_CONF_THRESHOLD,
            min_region: crate::postproc::DEFAULT_MIN_REGION,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    /// Full-resolution disparity, px.
    pub disparity: Tensor<f32>,
    /// Full-resolution confidence (nearest-neighbour from the cost volume).
    pub confidence: Tensor<f32>,
    pub filtered: FilteredDisparity<f32>,
    pub padding: Padding,
}

/// Runs the network on a pair of any size, padding to the cost-volume
/// scale and cropping the outputs back.
pub fn infer(
    pair: &StereoPair<f32>,
    weights: &WeightSet<f32>,
    cfg: &ModelConfig,
    opts: &InferOptions,
) -> Result<Inference> {
    let (h, w) = (pair.height(), pair.width());
    let padding = Padding::to_multiple(h, w, cfg.cv_scale);
    let padded = if padding.is_zero() {
        pair.clone()
    } else {
        StereoPair::new(padding.pad(&pair.left), padding.pad(&pair.right))?
    };
    let out = forward(&padded, weights, cfg)?;
    let conf = upsample_nearest(&confidence_from_matchability(&out.matchability)?, cfg.cv_scale)?;
    let disparity = padding.crop(&out.d_hr, h, w);
    let confidence = padding.crop(&conf, h, w);
    let filtered = filter_disparity(&disparity, &confidence, opts.conf_threshold, opts.min_region)?;
    Ok(Inference {
        disparity,
        confidence,
        filtered,
        padding,
    })
}
