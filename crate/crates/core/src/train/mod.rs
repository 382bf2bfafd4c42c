//! Optimizer, learning-rate schedule, augmentation and the epoch loop.

mod augment;
mod optim;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use augment::{
    augment, flip_vertical, gaussian_blur, random_crop, shift_disparity, AugmentFlags, BLUR_SIGMA_MAX, CROP_TRIES,
    JITTER_GAIN, JITTER_OFFSET, MIN_VALID_FRACTION, NOISE_SIGMA_MAX, SHIFT_MAX,
};
pub use optim::{adam_step, poly_lr, AdamConfig, Gradients, OptimizerState};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::loss::{total_loss, LabeledSample, LossConfig, LossValues};
use crate::model::{forward_graph, ModelConfig, Params, WeightSet};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub epochs: usize,
    pub poly_power: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub crop_h: usize,
    pub crop_w: usize,
    pub seed: u64,
    pub augment: AugmentFlags,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            epochs: 100,
            poly_power: 0.9,
            adam: AdamConfig::default(),
            batch_size: 16,
            crop_h: 896,
            crop_w: 1440,
            seed: 0,
            augment: AugmentFlags {
                flip: true,
                color_jitter: true,
                noise: false,
                blur: false,
                shift: false,
            },
        }
    }
}

impl TrainConfig {
    /// Small-scale recipe for 64×64 synthetic pairs with [`ModelConfig::toy`].
    pub fn toy() -> Self {
        Self {
            batch_size: 2,
            crop_h: 64,
            crop_w: 64,
            augment: AugmentFlags {
                flip: false,
                color_jitter: false,
                noise: false,
                blur: false,
                shift: true,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self, cv_scale: usize) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::invalid(format!("lr0 must be > 0, got {}", self.lr0)));
        }
        if !(self.poly_power >= 0.0) {
            return Err(Error::invalid("poly_power must be >= 0"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be >= 1"));
        }
        if self.crop_h == 0
            || self.crop_w == 0
            || !self.crop_h.is_multiple_of(cv_scale)
            || !self.crop_w.is_multiple_of(cv_scale)
        {
            return Err(Error::invalid(format!(
                "crop {}x{} must be non-empty and divisible by {cv_scale}",
                self.crop_w, self.crop_h
            )));
        }
        Ok(())
    }
}

/// Mean per-sample loss components of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossValues,
    pub wall_seconds: f64,
}

impl EpochStats {
    /// `epoch, lr, L_hr, L_lr, L_nsce, L_smooth, total, wall_seconds`, tab separated.
    pub fn log_line(&self) -> String {
        let l = &self.loss;
        format!(
            "{}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.3}",
            self.epoch, self.lr, l.hr, l.lr, l.nsce, l.smooth, l.total, self.wall_seconds
        )
    }

    pub const LOG_HEADER: &'static str = "epoch\tlr\tL_hr\tL_lr\tL_nsce\tL_smooth\ttotal\twall_seconds";
}

/// Independent generator for `(seed, purpose, a, b)`.
pub fn stream_rng(seed: u64, purpose: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, v) in key.chunks_exact_mut(8).zip([seed, purpose, a, b]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

const SHUFFLE: u64 = 1;
const SAMPLE: u64 = 2;

/// Forward, loss and backward for one sample. Returns the gradient of the
/// weighted total with respect to every weight and the loss components.
pub fn sample_gradients<T: Real>(
    weights: &WeightSet<T>,
    sample: &LabeledSample<T>,
    model_cfg: &ModelConfig,
    loss_cfg: &LossConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Gradients<T>, LossValues)> {
    let mut g = Graph::new();
    let p = Params::register(&mut g, weights, true);
    let l = g.constant(sample.pair.left.clone());
    let r = g.constant(sample.pair.right.clone());
    let out = forward_graph(&mut g, &p, model_cfg, l, r)?;
    let loss = total_loss(&mut g, &out, sample, model_cfg.cv_scale, loss_cfg, rng)?;
    g.backward(loss.total)?;
    let values = loss.values(&g);
    let mut grads = Gradients::new();
    for (name, v) in p.iter() {
        let gr = g.grad(v).ok_or_else(|| Error::MissingGradient(name.to_owned()))?;
        grads.insert(name.to_owned(), gr.to_vec());
    }
    Ok((grads, values))
}

/// One pass over `dataset` in shuffled batches. Batch gradients are the
/// sum of per-sample gradients, reduced in sample order.
pub fn train_epoch<T: Real>(
    dataset: &[LabeledSample<T>],
    weights: &mut WeightSet<T>,
    state: &mut OptimizerState<T>,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    epoch: usize,
) -> Result<EpochStats> {
    if dataset.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    train_cfg.validate(model_cfg.cv_scale)?;
    let start = Instant::now();
    let lr = poly_lr(epoch, train_cfg.epochs, train_cfg.lr0, train_cfg.poly_power)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut stream_rng(train_cfg.seed, SHUFFLE, epoch as u64, 0));

    let mut sum = [0.0f64; 5];
    for batch in order.chunks(train_cfg.batch_size) {
        let results: Vec<Result<(Gradients<T>, LossValues)>> = batch
            .par_iter()
            .map(|&idx| {
                let mut rng = stream_rng(train_cfg.seed, SAMPLE, epoch as u64, idx as u64);
                let s = random_crop(&dataset[idx], train_cfg.crop_h, train_cfg.crop_w, &mut rng)?;
                let s = augment(&s, &train_cfg.augment, &mut rng);
                sample_gradients(weights, &s, model_cfg, loss_cfg, &mut rng)
            })
            .collect();
        let mut total: Option<Gradients<T>> = None;
        for r in results {
            let (grads, v) = r?;
            for (acc, x) in sum.iter_mut().zip([v.hr, v.lr, v.nsce, v.smooth, v.total]) {
                *acc += x;
            }
            match total.as_mut() {
                None => total = Some(grads),
                Some(t) => {
                    for (name, g) in grads {
                        for (a, b) in t.get_mut(&name).expect("same weights").iter_mut().zip(g) {
                            *a += b;
                        }
                    }
                }
            }
        }
        adam_step(weights, &total.expect("non-empty batch"), state, lr, &train_cfg.adam)?;
    }
    let n = dataset.len() as f64;
    Ok(EpochStats {
        epoch,
        lr,
        loss: LossValues {
            hr: sum[0] / n,
            lr: sum[1] / n,
            nsce: sum[2] / n,
            smooth: sum[3] / n,
            total: sum[4] / n,
        },
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs `train_cfg.epochs` epochs, calling `on_epoch` after each one.
pub fn train<T: Real>(
    dataset: &[LabeledSample<T>],
    weights: &mut WeightSet<T>,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    mut on_epoch: impl FnMut(&EpochStats, &WeightSet<T>),
) -> Result<Vec<EpochStats>> {
    let mut state = OptimizerState::new(weights);
    let mut history = Vec::with_capacity(train_cfg.epochs);
    for epoch in 0..train_cfg.epochs {
        let stats = train_epoch(dataset, weights, &mut state, model_cfg, train_cfg, loss_cfg, epoch)?;
        log::info!("{}", stats.log_line());
        on_epoch(&stats, weights);
        history.push(stats);
    }
    Ok(history)
}
