//! Training objective: normalised smooth-L1 on both disparity outputs,
//! noise-sampled cross entropy on the cost volume, and edge-aware
//! smoothness on the refined disparity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::mask::Mask;
use crate::model::{StereoPair, StereoVars};
use crate::real::Real;
use crate::tensor::Tensor;

pub use crate::ops::smooth_l1;

/// Lower bound, in pixels of the map being scored, on the per-element
/// normaliser `mu + 2 sigma`.
pub const NORMALISER_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    /// Width of the Gaussian target in the cross-entropy term, in
    /// cost-volume pixels.
    pub nsce_sigma: f64,
    pub smooth_edge_gain: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 100.0,
            lambda2: 100.0,
            lambda3: 0.2,
            lambda4: 20.0,
            nsce_sigma: 1.0,
            smooth_edge_gain: 10.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let l = [self.lambda1, self.lambda2, self.lambda3, self.lambda4];
        if l.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid(format!("loss weights must be >= 0, got {l:?}")));
        }
        if !(self.nsce_sigma > 0.0) || !(self.smooth_edge_gain >= 0.0) {
            return Err(Error::invalid("nsce_sigma must be > 0 and edge gain >= 0"));
        }
        Ok(())
    }
}

/// A stereo pair with full-resolution ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample<T> {
    pub pair: StereoPair<T>,
    /// `[H,W]` disparity in full-resolution pixels.
    pub gt_disparity: Tensor<T>,
    pub valid_mask: Mask,
}

impl<T: Real> LabeledSample<T> {
    pub fn new(pair: StereoPair<T>, gt_disparity: Tensor<T>, valid_mask: Mask) -> Result<Self> {
        let (h, w) = (pair.height(), pair.width());
        if gt_disparity.shape() != [h, w] || valid_mask.height() != h || valid_mask.width() != w {
            return Err(Error::shape(format!(
                "ground truth {:?} / mask {}x{} do not match images {h}x{w}",
                gt_disparity.shape(),
                valid_mask.height(),
                valid_mask.width()
            )));
        }
        Ok(Self {
            pair,
            gt_disparity,
            valid_mask,
        })
    }
}

/// Graph handles of every loss term.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub hr: Var,
    pub lr: Var,
    pub nsce: Var,
    pub smooth: Var,
    pub total: Var,
}

/// Scalar values of every loss term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub hr: f64,
    pub lr: f64,
    pub nsce: f64,
    pub smooth: f64,
    pub total: f64,
}

impl LossVars {
    pub fn values<T: Real>(&self, g: &Graph<T>) -> LossValues {
        let v = |x: Var| g.value(x).item().as_f64();
        LossValues {
            hr: v(self.hr),
            lr: v(self.lr),
            nsce: v(self.nsce),
            smooth: v(self.smooth),
            total: v(self.total),
        }
    }
}

impl LossValues {
    pub fn weighted(hr: f64, lr: f64, nsce: f64, smooth: f64, cfg: &LossConfig) -> Self {
        Self {
            hr,
            lr,
            nsce,
            smooth,
            total: cfg.lambda1 * hr + cfg.lambda2 * lr + cfg.lambda3 * nsce + cfg.lambda4 * smooth,
        }
    }
}

/// Mean and population standard deviation of the valid values.
fn valid_stats<T: Real>(gt: &[T], mask: &[bool]) -> Option<(f64, f64)> {
    let vals: Vec<f64> = gt
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v.as_f64())
        .collect();
    if vals.is_empty() {
        return None;
    }
    let n = vals.len() as f64;
    let mu = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    Some((mu, var.sqrt()))
}

/// One batch element: `sum_valid smooth_l1(pred - gt) / (mu + 2 sigma)`.
/// An element without valid pixels contributes a constant zero.
pub fn disparity_loss<T: Real>(g: &mut Graph<T>, pred: Var, gt: &Tensor<T>, mask: &Mask) -> Result<Var> {
    if g.shape(pred) != gt.shape() || gt.numel() != mask.data().len() {
        return Err(Error::shape(format!(
            "prediction {:?} vs ground truth {:?}",
            g.shape(pred),
            gt.shape()
        )));
    }
    let Some((mu, sigma)) = valid_stats(gt.data(), mask.data()) else {
        log::warn!("disparity loss: batch element has no valid ground truth, contributing 0");
        return Ok(g.constant(Tensor::scalar(T::zero())));
    };
    let norm = (mu + 2.0 * sigma).max(NORMALISER_FLOOR);
    g.smooth_l1_sum(pred, gt.data().to_vec(), mask.data().to_vec(), T::of(1.0 / norm))
}

/// Sum of [`disparity_loss`] over a batch.
pub fn disparity_loss_batch<T: Real>(g: &mut Graph<T>, batch: &[(Var, &Tensor<T>, &Mask)]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for &(pred, gt, mask) in batch {
        let l = disparity_loss(g, pred, gt, mask)?;
        acc = Some(match acc {
            Some(a) => g.add(a, l)?,
            None => l,
        });
    }
    acc.ok_or_else(|| Error::invalid("empty batch"))
}

/// Block-averages the valid pixels of `gt` by `scale` and converts to
/// low-resolution pixel units. A block is valid if any pixel in it is.
pub fn downsample_ground_truth<T: Real>(gt: &Tensor<T>, mask: &Mask, scale: usize) -> Result<(Tensor<T>, Mask)> {
    let (h, w) = (gt.shape()[0], gt.shape()[1]);
    if h % scale != 0 || w % scale != 0 {
        return Err(Error::shape(format!("{h}x{w} not divisible by {scale}")));
    }
    let (hl, wl) = (h / scale, w / scale);
    let mut out = Tensor::zeros(&[hl, wl]);
    let mut valid = Mask::filled(hl, wl, false);
    for y in 0..hl {
        for x in 0..wl {
            let (mut sum, mut n) = (0.0, 0usize);
            for dy in 0..scale {
                for dx in 0..scale {
                    let (yy, xx) = (y * scale + dy, x * scale + dx);
                    if mask.get(yy, xx) {
                        sum += gt.at(&[yy, xx]).as_f64();
                        n += 1;
                    }
                }
            }
            if n > 0 {
                out.set(&[y, x], T::of(sum / n as f64 / scale as f64));
                valid.set(y, x, true);
            }
        }
    }
    Ok((out, valid))
}

/// Gaussian target over `[0, ndisp)` centred on `gt + u`, `u ~ U(-0.5, 0.5)`,
/// laid out `[ndisp, H, W]`; all-zero columns at invalid pixels.
/// Returns the target and the number of valid pixels.
pub fn nsce_target<T: Real>(
    gt_lr: &Tensor<T>,
    mask_lr: &Mask,
    ndisp: usize,
    sigma: f64,
    rng: &mut impl Rng,
) -> (Vec<T>, usize) {
    let inner = gt_lr.numel();
    let mut target = vec![T::zero(); ndisp * inner];
    let mut count = 0;
    for i in 0..inner {
        if !mask_lr.data()[i] {
            continue;
        }
        count += 1;
        let centre = gt_lr.data()[i].as_f64() + rng.random_range(-0.5..0.5);
        let w: Vec<f64> = (0..ndisp)
            .map(|d| (-(d as f64 - centre).powi(2) / (2.0 * sigma * sigma)).exp())
            .collect();
        let z: f64 = w.iter().sum();
        for (d, wd) in w.into_iter().enumerate() {
            target[d * inner + i] = T::of(wd / z);
        }
    }
    (target, count)
}

/// Mean cross entropy between the sampled target and the softmax of
/// `scores` (`[D',H',W']`) over valid pixels.
pub fn nsce_loss<T: Real>(
    g: &mut Graph<T>,
    scores: Var,
    gt_lr: &Tensor<T>,
    mask_lr: &Mask,
    sigma: f64,
    rng: &mut impl Rng,
) -> Result<Var> {
    let s = g.shape(scores).to_vec();
    if s.len() != 3 || s[1..] != *gt_lr.shape() {
        return Err(Error::shape(format!(
            "scores {s:?} vs low-resolution ground truth {:?}",
            gt_lr.shape()
        )));
    }
    let (target, count) = nsce_target(gt_lr, mask_lr, s[0], sigma, rng);
    if count == 0 {
        return Ok(g.constant(Tensor::scalar(T::zero())));
    }
    g.cross_entropy(scores, target, T::of(1.0 / count as f64))
}

/// Edge weights `exp(-gain * |dI|)` from central differences averaged
/// over colour channels, for the x and y stencils.
pub fn smoothness_weights<T: Real>(image: &Tensor<T>, gain: f64) -> (Vec<T>, Vec<T>) {
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let px = |ch: usize, y: usize, x: usize| image.data()[(ch * h + y) * w + x].as_f64();
    let mut wx = vec![T::zero(); h * w];
    let mut wy = vec![T::zero(); h * w];
    for y in 0..h {
        for x in 0..w {
            if x > 0 && x + 1 < w {
                let gx = (0..c)
                    .map(|ch| (px(ch, y, x + 1) - px(ch, y, x - 1)).abs() / 2.0)
                    .sum::<f64>()
                    / c as f64;
                wx[y * w + x] = T::of((-gain * gx).exp());
            }
            if y > 0 && y + 1 < h {
                let gy = (0..c)
                    .map(|ch| (px(ch, y + 1, x) - px(ch, y - 1, x)).abs() / 2.0)
                    .sum::<f64>()
                    / c as f64;
                wy[y * w + x] = T::of((-gain * gy).exp());
            }
        }
    }
    (wx, wy)
}

/// Mean over pixels of edge-weighted absolute second differences of `disp`.
pub fn smoothness_loss<T: Real>(g: &mut Graph<T>, disp: Var, image: &Tensor<T>, gain: f64) -> Result<Var> {
    let s = g.shape(disp).to_vec();
    if image.rank() != 3 || s.len() != 2 || image.shape()[1..] != s[..] {
        return Err(Error::shape(format!("disparity {s:?} vs image {:?}", image.shape())));
    }
    let (wx, wy) = smoothness_weights(image, gain);
    g.smoothness(disp, wx, wy, T::of(1.0 / (s[0] * s[1]) as f64))
}

/// `lambda1 * a + lambda2 * b + lambda3 * c + lambda4 * d` on the graph.
pub fn combine<T: Real>(g: &mut Graph<T>, terms: [Var; 4], cfg: &LossConfig) -> Result<Var> {
    let l = [cfg.lambda1, cfg.lambda2, cfg.lambda3, cfg.lambda4];
    let mut acc = g.scale(terms[0], T::of(l[0]));
    for (t, w) in terms.into_iter().zip(l).skip(1) {
        let s = g.scale(t, T::of(w));
        acc = g.add(acc, s)?;
    }
    Ok(acc)
}

/// Full objective for one sample. `cv_scale` converts the ground truth to
/// cost-volume resolution for the low-resolution terms.
pub fn total_loss<T: Real>(
    g: &mut Graph<T>,
    out: &StereoVars,
    sample: &LabeledSample<T>,
    cv_scale: usize,
    cfg: &LossConfig,
    rng: &mut impl Rng,
) -> Result<LossVars> {
    cfg.validate()?;
    let hr = disparity_loss(g, out.d_hr, &sample.gt_disparity, &sample.valid_mask)?;
    let (gt_lr, mask_lr) = downsample_ground_truth(&sample.gt_disparity, &sample.valid_mask, cv_scale)?;
    let lr = disparity_loss(g, out.d_lr, &gt_lr, &mask_lr)?;
    let nsce = nsce_loss(g, out.scores, &gt_lr, &mask_lr, cfg.nsce_sigma, rng)?;
    let smooth = smoothness_loss(g, out.d_hr, &sample.pair.left, cfg.smooth_edge_gain)?;
    let total = combine(g, [hr, lr, nsce, smooth], cfg)?;
    Ok(LossVars {
        hr,
        lr,
        nsce,
        smooth,
        total,
    })
}
