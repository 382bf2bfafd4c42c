//! Disparity error statistics: EPE, Bad-tau, RMSE and error quantiles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::real::Real;
use crate::tensor::Tensor;

pub const DEFAULT_THRESHOLDS: [f64; 3] = [1.0, 2.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean absolute error, px.
    pub epe: f64,
    /// Fraction of evaluated pixels with error strictly above each
    /// threshold, keyed by the threshold printed with `{:?}` (`"2.0"`).
    pub bad: BTreeMap<String, f64>,
    pub rmse: f64,
    pub a90: f64,
    pub a95: f64,
    pub evaluated: usize,
    /// Pixels excluded by the mask.
    pub masked: usize,
    /// In-mask pixels skipped because prediction or ground truth is not finite.
    pub excluded_nonfinite: usize,
}

impl MetricReport {
    pub fn bad_at(&self, tau: f64) -> Option<f64> {
        self.bad.get(&format!("{tau:?}")).copied()
    }
}

/// Nearest-rank percentile of ascending `sorted`: element `ceil(p/100 n) - 1`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn compute_metrics<T: Real>(
    pred: &Tensor<T>,
    gt: &Tensor<T>,
    mask: Option<&Mask>,
    thresholds: &[f64],
) -> Result<MetricReport> {
    if pred.shape() != gt.shape() || pred.rank() != 2 {
        return Err(Error::shape(format!(
            "prediction {:?} and ground truth {:?} must be equal [H,W] maps",
            pred.shape(),
            gt.shape()
        )));
    }
    if let Some(m) = mask {
        if [m.height(), m.width()] != pred.shape() {
            return Err(Error::shape("mask does not match the maps"));
        }
    }
    let mut errors = Vec::new();
    let (mut masked, mut nonfinite) = (0, 0);
    for (i, (p, g)) in pred.data().iter().zip(gt.data()).enumerate() {
        if mask.is_some_and(|m| !m.data()[i]) {
            masked += 1;
            continue;
        }
        let (p, g) = (p.as_f64(), g.as_f64());
        if !(p.is_finite() && g.is_finite()) {
            nonfinite += 1;
            continue;
        }
        errors.push((p - g).abs());
    }
    if errors.is_empty() {
        return Err(Error::invalid("no pixels to evaluate: mask is empty"));
    }
    let n = errors.len() as f64;
    let epe = errors.iter().sum::<f64>() / n;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let bad = thresholds
        .iter()
        .map(|&t| (format!("{t:?}"), errors.iter().filter(|&&e| e > t).count() as f64 / n))
        .collect();
    errors.sort_by(f64::total_cmp);
    Ok(MetricReport {
        epe,
        bad,
        rmse,
        a90: nearest_rank(&errors, 90.0),
        a95: nearest_rank(&errors, 95.0),
        evaluated: errors.len(),
        masked,
        excluded_nonfinite: nonfinite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_small_cases() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(nearest_rank(&v, 90.0), 4.0);
        assert_eq!(nearest_rank(&v, 50.0), 2.0);
        assert_eq!(nearest_rank(&v, 0.0), 1.0);
    }
}
