//! Confidence thresholding and small-region removal.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::real::Real;
use crate::tensor::Tensor;

pub const DEFAULT_CONF_THRESHOLD: f64 = 0.25;
pub const DEFAULT_MIN_REGION: usize = 2000;

/// `exp(matchability)`; rejects positive log-probabilities.
pub fn confidence_from_matchability<T: Real>(matchability: &Tensor<T>) -> Result<Tensor<T>> {
    if let Some(v) = matchability.data().iter().find(|v| !(**v <= T::zero())) {
        return Err(Error::invalid(format!("matchability must be <= 0, found {v}")));
    }
    Ok(matchability.map(|v| v.exp()))
}

/// Repeats every pixel of a `[H,W]` map `factor x factor` times.
pub fn upsample_nearest<T: Real>(map: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if map.rank() != 2 || factor == 0 {
        return Err(Error::shape(format!(
            "nearest upsampling needs a [H,W] map and factor >= 1, got {:?} x{factor}",
            map.shape()
        )));
    }
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let wo = w * factor;
    Ok(Tensor::from_fn(&[h * factor, wo], |i| {
        map.data()[(i / wo / factor) * w + (i % wo) / factor]
    }))
}

/// 4-connected components of a mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Regions {
    /// Row-major labels: 0 for background, `1..=K` for components.
    pub labels: Vec<u32>,
    /// `sizes[k - 1]` is the pixel count of label `k`.
    pub sizes: Vec<usize>,
}

pub fn label_regions(mask: &Mask) -> Regions {
    let (h, w) = (mask.height(), mask.width());
    let mut labels = vec![0u32; h * w];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.data()[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (y, x) = (i / w, i % w);
            let mut visit = |j: usize| {
                if mask.data()[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(size);
    }
    Regions { labels, sizes }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredDisparity<T> {
    pub disparity: Tensor<T>,
    pub valid: Mask,
}

impl<T: Real> FilteredDisparity<T> {
    /// Disparity with invalid pixels replaced by NaN.
    pub fn masked(&self) -> Tensor<T> {
        let mut d = self.disparity.clone();
        for (v, &ok) in d.data_mut().iter_mut().zip(self.valid.data()) {
            if !ok {
                *v = T::nan();
            }
        }
        d
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid.count() as f64 / self.valid.data().len() as f64
    }

    /// Filters again, restricted to the pixels that are currently valid.
    pub fn refilter(&self, confidence: &Tensor<T>, conf_threshold: f64, min_region: usize) -> Result<Self> {
        filter_within(
            &self.disparity,
            confidence,
            conf_threshold,
            min_region,
            Some(&self.valid),
        )
    }
}

fn filter_within<T: Real>(
    disparity: &Tensor<T>,
    confidence: &Tensor<T>,
    conf_threshold: f64,
    min_region: usize,
    within: Option<&Mask>,
) -> Result<FilteredDisparity<T>> {
    if disparity.rank() != 2 || confidence.shape() != disparity.shape() {
        return Err(Error::shape(format!(
            "disparity {:?} and confidence {:?} must be equal [H,W] maps",
            disparity.shape(),
            confidence.shape()
        )));
    }
    if !(conf_threshold >= 0.0) {
        return Err(Error::invalid("confidence threshold must be >= 0"));
    }
    let (h, w) = (disparity.shape()[0], disparity.shape()[1]);
    let thr = T::of(conf_threshold);
    let confident = Mask::from_fn(h, w, |y, x| {
        confidence.data()[y * w + x] >= thr && within.is_none_or(|m| m.get(y, x))
    });
    let regions = label_regions(&confident);
    let data = regions
        .labels
        .iter()
        .map(|&l| l > 0 && regions.sizes[l as usize - 1] >= min_region)
        .collect();
    Ok(FilteredDisparity {
        disparity: disparity.clone(),
        valid: Mask::new(h, w, data)?,
    })
}

/// A pixel is valid when its confidence is at least `conf_threshold` and
/// its 4-connected region of confident pixels has at least `min_region`
/// pixels. Disparity values are passed through untouched.
pub fn filter_disparity<T: Real>(
    disparity: &Tensor<T>,
    confidence: &Tensor<T>,
    conf_threshold: f64,
    min_region: usize,
) -> Result<FilteredDisparity<T>> {
    filter_within(disparity, confidence, conf_threshold, min_region, None)
}
