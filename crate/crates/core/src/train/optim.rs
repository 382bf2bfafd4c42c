use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::WeightSet;
use crate::real::Real;

/// Gradients keyed by weight name.
pub type Gradients<T> = BTreeMap<String, Vec<T>>;

/// `lr0 * (1 - t/T)^power`.
pub fn poly_lr(t: usize, total: usize, lr0: f64, power: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::invalid("poly_lr: total steps must be >= 1"));
    }
    if t > total {
        return Err(Error::invalid(format!("poly_lr: step {t} exceeds total {total}")));
    }
    Ok(lr0 * (1.0 - t as f64 / total as f64).powf(power))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per weight plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub m: BTreeMap<String, Vec<T>>,
    pub v: BTreeMap<String, Vec<T>>,
    pub t: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(weights: &WeightSet<T>) -> Self {
        let zeros: BTreeMap<String, Vec<T>> = weights
            .iter()
            .map(|(k, t)| (k.to_owned(), vec![T::zero(); t.numel()]))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of every weight.
pub fn adam_step<T: Real>(
    weights: &mut WeightSet<T>,
    grads: &Gradients<T>,
    state: &mut OptimizerState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    for (name, w) in weights.iter() {
        let g = grads.get(name).ok_or_else(|| Error::MissingGradient(name.to_owned()))?;
        if g.len() != w.numel() {
            return Err(Error::shape(format!(
                "gradient for `{name}` has {} entries, weight has {}",
                g.len(),
                w.numel()
            )));
        }
        if state.m.get(name).map(Vec::len) != Some(w.numel()) {
            return Err(Error::shape(format!("optimizer state does not cover `{name}`")));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one, eps) = (T::one(), T::of(cfg.eps));
    let c1 = T::of(1.0 - cfg.beta1.powi(t));
    let c2 = T::of(1.0 - cfg.beta2.powi(t));
    let lr = T::of(lr);
    for (name, w) in weights.iter_mut() {
        let g = &grads[name];
        let m = state.m.get_mut(name).expect("checked above");
        let v = state.v.get_mut(name).expect("checked above");
        for (((wi, &gi), mi), vi) in w.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *wi -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
