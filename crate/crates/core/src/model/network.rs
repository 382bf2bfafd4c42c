//! The five network stages and their composition.

use std::collections::BTreeMap;

use super::config::{block_dilation, ModelConfig};
use super::weights::WeightSet;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::nn::{conv2d_same, leaky, residual_block2d, ConvVars, ResidualVars};
use crate::real::Real;
use crate::tensor::Tensor;

/// Rectified left/right colour images, `[3,H,W]` each.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoPair<T> {
    pub left: Tensor<T>,
    pub right: Tensor<T>,
}

impl<T: Real> StereoPair<T> {
    pub fn new(left: Tensor<T>, right: Tensor<T>) -> Result<Self> {
        if left.rank() != 3 || left.shape()[0] != 3 {
            return Err(Error::shape(format!(
                "stereo images must be [3,H,W], got {:?}",
                left.shape()
            )));
        }
        if left.shape() != right.shape() {
            return Err(Error::shape(format!(
                "left {:?} and right {:?} differ in shape",
                left.shape(),
                right.shape()
            )));
        }
        Ok(Self { left, right })
    }

    pub fn height(&self) -> usize {
        self.left.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.left.shape()[2]
    }
}

/// Network outputs for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoOutput<T> {
    /// `[H/s, W/s]`, in low-resolution pixels.
    pub d_lr: Tensor<T>,
    /// `[H, W]`, in full-resolution pixels.
    pub d_hr: Tensor<T>,
    /// `[H/s, W/s]`, log probability mass near `d_lr`; always `<= 0`.
    pub matchability: Tensor<T>,
    /// `[D/s, H/s, W/s]`, softmax over the disparity axis.
    pub prob_volume: Tensor<T>,
}

/// Graph handles for every output of [`forward_graph`].
#[derive(Debug, Clone, Copy)]
pub struct StereoVars {
    pub scores: Var,
    pub prob: Var,
    pub d_lr: Var,
    pub matchability: Var,
    pub d_hr: Var,
}

/// Weight handles registered on a graph.
#[derive(Debug, Clone, Default)]
pub struct Params {
    vars: BTreeMap<String, Var>,
}

impl Params {
    /// Adds every tensor of `weights` to `g` as a leaf.
    pub fn register<T: Real>(g: &mut Graph<T>, weights: &WeightSet<T>, trainable: bool) -> Self {
        let vars = weights
            .iter()
            .map(|(name, t)| {
                let v = if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                };
                (name.to_owned(), v)
            })
            .collect();
        Self { vars }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("missing weight `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn conv(&self, layer: &str) -> Result<ConvVars> {
        Ok(ConvVars {
            weight: self.get(&format!("{layer}.weight"))?,
            bias: self.get(&format!("{layer}.bias"))?,
        })
    }

    pub fn residual(&self, block: &str) -> Result<ResidualVars> {
        Ok(ResidualVars {
            first: self.conv(&format!("{block}.a"))?,
            second: self.conv(&format!("{block}.b"))?,
            proj: self.conv(&format!("{block}.proj")).ok(),
        })
    }
}

impl FromIterator<(String, Var)> for Params {
    fn from_iter<I: IntoIterator<Item = (String, Var)>>(iter: I) -> Self {
        Self {
            vars: iter.into_iter().collect(),
        }
    }
}

fn check_divisible(h: usize, w: usize, s: usize) -> Result<()> {
    if !h.is_multiple_of(s) || !w.is_multiple_of(s) {
        return Err(Error::shape(format!(
            "image {h}x{w} is not divisible by the cost-volume scale {s}"
        )));
    }
    Ok(())
}

/// Dilated residual encoder: `[3,H,W]` to `[feat_channels, H/s, W/s]`.
pub fn extract_features<T: Real>(g: &mut Graph<T>, p: &Params, cfg: &ModelConfig, image: Var) -> Result<Var> {
    let s = g.shape(image).to_vec();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::shape(format!("image must be [3,H,W], got {s:?}")));
    }
    check_divisible(s[1], s[2], cfg.cv_scale)?;
    let stem = p.conv("enc.stem")?;
    let mut x = g.conv2d(image, stem.weight, stem.bias, 2, 1, 1)?;
    x = leaky(g, x);
    for i in 1..cfg.down_stages() {
        let c = p.conv(&format!("enc.down{i}"))?;
        x = g.conv2d(x, c.weight, c.bias, 2, 1, 1)?;
        x = leaky(g, x);
    }
    for i in 0..cfg.enc_blocks {
        x = residual_block2d(g, x, &p.residual(&format!("enc.res{i}"))?, block_dilation(i))?;
    }
    let head = p.conv("enc.head")?;
    g.conv2d(x, head.weight, head.bias, 1, 1, 0)
}

/// `[C,D',H',W']` correlation volume between left and right features.
pub fn build_cost_volume<T: Real>(g: &mut Graph<T>, f_left: Var, f_right: Var, ndisp_lr: usize) -> Result<Var> {
    g.cost_volume(f_left, f_right, ndisp_lr)
}

/// 3-D convs, flatten channel x disparity, dilated 2-D residual stack,
/// 1x1 conv to one score channel per disparity, plus the channel-mean
/// correlation as a skip. Output `[D',H',W']`.
pub fn aggregate_cost<T: Real>(g: &mut Graph<T>, p: &Params, cfg: &ModelConfig, volume: Var) -> Result<Var> {
    let s = g.shape(volume).to_vec();
    if s.len() != 4 || s[0] != cfg.feat_channels || s[1] != cfg.ndisp_lr() {
        return Err(Error::shape(format!(
            "cost volume {s:?} does not match [{}, {}, H, W]",
            cfg.feat_channels,
            cfg.ndisp_lr()
        )));
    }
    let (h, w) = (s[2], s[3]);
    let mut x = volume;
    for i in 0..cfg.agg_3d_channels.len() {
        let c = p.conv(&format!("agg.c3d{i}"))?;
        x = g.conv3d(x, c.weight, c.bias, 1, 1)?;
        x = leaky(g, x);
    }
    let mut x = g.reshape(x, &[cfg.agg_width(), h, w])?;
    for i in 0..cfg.agg_2d_blocks {
        x = residual_block2d(g, x, &p.residual(&format!("agg.res{i}"))?, block_dilation(i))?;
    }
    let out = p.conv("agg.out")?;
    let scores = g.conv2d(x, out.weight, out.bias, 1, 1, 0)?;
    let c = cfg.feat_channels;
    let mean_w = g.constant(Tensor::full(&[1, c, 1, 1, 1], T::of(1.0 / c as f64)));
    let zero_b = g.constant(Tensor::zeros(&[1]));
    let corr = g.conv3d(volume, mean_w, zero_b, 1, 0)?;
    let corr = g.reshape(corr, &[cfg.ndisp_lr(), h, w])?;
    g.add(scores, corr)
}

/// Softmax over disparity followed by the expected disparity.
/// Returns `(d_lr, prob)`.
pub fn soft_argmin<T: Real>(g: &mut Graph<T>, scores: Var) -> Result<(Var, Var)> {
    if g.shape(scores).len() != 3 || g.shape(scores)[0] < 2 {
        return Err(Error::shape(format!(
            "scores must be [D,H,W] with D >= 2, got {:?}",
            g.shape(scores)
        )));
    }
    let prob = g.softmax(scores, 0)?;
    let d = g.expectation(prob)?;
    Ok((d, prob))
}

pub fn matchability<T: Real>(g: &mut Graph<T>, prob: Var, d_lr: Var) -> Result<Var> {
    g.matchability(prob, d_lr)
}

/// Full-resolution disparity: `s * upsample(d_lr) + residual`.
pub fn refine<T: Real>(
    g: &mut Graph<T>,
    p: &Params,
    cfg: &ModelConfig,
    image: Var,
    d_lr: Var,
    matchability: Var,
) -> Result<Var> {
    let s = cfg.cv_scale;
    let (hl, wl) = (g.shape(d_lr)[0], g.shape(d_lr)[1]);
    let is = g.shape(image).to_vec();
    if is.len() != 3 || is[1] != hl * s || is[2] != wl * s || g.shape(matchability) != [hl, wl] {
        return Err(Error::shape(format!(
            "refine inputs disagree: image {is:?}, d_lr [{hl},{wl}], matchability {:?}, scale {s}",
            g.shape(matchability)
        )));
    }
    let d3 = g.reshape(d_lr, &[1, hl, wl])?;
    let d_up = g.upsample_bilinear(d3, s)?;
    let d_norm = g.scale(d_up, T::of(1.0 / cfg.ndisp_lr() as f64));
    let m3 = g.reshape(matchability, &[1, hl, wl])?;
    let m_up = g.upsample_bilinear(m3, s)?;
    let input = g.concat(&[image, d_norm, m_up])?;

    let c = p.conv("ref.in")?;
    let mut x = g.conv2d(input, c.weight, c.bias, 2, 1, 1)?;
    x = leaky(g, x);
    for i in 0..cfg.refine_blocks {
        x = residual_block2d(g, x, &p.residual(&format!("ref.res{i}"))?, block_dilation(i))?;
    }
    let x = g.upsample_bilinear(x, 2)?;
    let residual = conv2d_same(g, x, p.conv("ref.out")?, 1)?;
    let residual = g.reshape(residual, &[is[1], is[2]])?;

    let base = g.scale(d_up, T::of(s as f64));
    let base = g.reshape(base, &[is[1], is[2]])?;
    g.add(base, residual)
}

/// Runs all stages on graph-resident images.
pub fn forward_graph<T: Real>(
    g: &mut Graph<T>,
    p: &Params,
    cfg: &ModelConfig,
    left: Var,
    right: Var,
) -> Result<StereoVars> {
    cfg.validate()?;
    let fl = extract_features(g, p, cfg, left)?;
    let fr = extract_features(g, p, cfg, right)?;
    let vol = build_cost_volume(g, fl, fr, cfg.ndisp_lr())?;
    let scores = aggregate_cost(g, p, cfg, vol)?;
    let (d_lr, prob) = soft_argmin(g, scores)?;
    let m = matchability(g, prob, d_lr)?;
    let d_hr = refine(g, p, cfg, left, d_lr, m)?;
    Ok(StereoVars {
        scores,
        prob,
        d_lr,
        matchability: m,
        d_hr,
    })
}

/// Inference on one pair; no gradients are recorded for the weights.
pub fn forward<T: Real>(pair: &StereoPair<T>, weights: &WeightSet<T>, cfg: &ModelConfig) -> Result<StereoOutput<T>> {
    let mut g = Graph::new();
    let p = Params::register(&mut g, weights, false);
    let l = g.constant(pair.left.clone());
    let r = g.constant(pair.right.clone());
    let v = forward_graph(&mut g, &p, cfg, l, r)?;
    Ok(StereoOutput {
        d_lr: g.take_value(v.d_lr),
        d_hr: g.take_value(v.d_hr),
        matchability: g.take_value(v.matchability),
        prob_volume: g.take_value(v.prob),
    })
}
