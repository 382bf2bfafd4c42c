//! Finite-difference gradient cases, one closure per differentiable op.
//! Each case takes a seed and returns the worst relative error.

use rand::Rng;
use stereo_core::loss::{disparity_loss, nsce_loss, smoothness_loss, total_loss, LabeledSample, LossConfig};
use stereo_core::model::{forward_graph, soft_argmin, ModelConfig, Params, StereoPair, WeightSet};
use stereo_core::nn::{residual_block2d, ConvVars, ResidualVars};
use stereo_core::{Graph, Mask, Tensor, Var};

use super::{gradcheck, random_tensor, rng};

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;
pub const SEEDS: u64 = 20;

pub type Case = fn(u64) -> f64;

pub fn all() -> Vec<(&'static str, Case)> {
    vec![
        ("conv2d", conv2d),
        ("conv3d", conv3d),
        ("residual_block", residual_block),
        ("upsample", upsample),
        ("softmax", softmax),
        ("soft_argmin", soft_argmin_case),
        ("matchability", matchability),
        ("cost_volume", cost_volume),
        ("disparity_loss", disparity_loss_case),
        ("nsce_loss", nsce_loss_case),
        ("smoothness_loss", smoothness_case),
        ("total_loss", total_loss_case),
    ]
}

pub fn conv2d(seed: u64) -> f64 {
    let mut r = rng(seed);
    let stride = r.random_range(1..=2);
    let dilation = r.random_range(1..=2);
    let x = random_tensor(&mut r, &[2, 6, 7], -1.0, 1.0);
    let w = random_tensor(&mut r, &[3, 2, 3, 3], -1.0, 1.0);
    let b = random_tensor(&mut r, &[3], -1.0, 1.0);
    gradcheck(
        &[x, w, b],
        &|g, v| g.conv2d(v[0], v[1], v[2], stride, dilation, dilation).unwrap(),
        STEP,
    )
}

pub fn conv3d(seed: u64) -> f64 {
    let mut r = rng(seed);
    let stride = r.random_range(1..=2);
    let x = random_tensor(&mut r, &[2, 4, 5, 5], -1.0, 1.0);
    let w = random_tensor(&mut r, &[2, 2, 3, 3, 3], -1.0, 1.0);
    let b = random_tensor(&mut r, &[2], -1.0, 1.0);
    gradcheck(&[x, w, b], &|g, v| g.conv3d(v[0], v[1], v[2], stride, 1).unwrap(), STEP)
}

pub fn residual_block(seed: u64) -> f64 {
    let mut r = rng(seed);
    let project = seed % 2 == 1;
    let dilation = [1, 2, 5, 9][(seed / 2 % 4) as usize];
    let cout = if project { 3 } else { 2 };
    let ins = vec![
        random_tensor(&mut r, &[2, 6, 6], -1.0, 1.0),
        random_tensor(&mut r, &[cout, 2, 3, 3], -0.5, 0.5),
        random_tensor(&mut r, &[cout], -0.5, 0.5),
        random_tensor(&mut r, &[cout, cout, 3, 3], -0.5, 0.5),
        random_tensor(&mut r, &[cout], -0.5, 0.5),
        random_tensor(&mut r, &[cout, 2, 1, 1], -0.5, 0.5),
        random_tensor(&mut r, &[cout], -0.5, 0.5),
    ];
    let ins = if project { ins } else { ins[..5].to_vec() };
    gradcheck(
        &ins,
        &|g, v| {
            let block = ResidualVars {
                first: ConvVars {
                    weight: v[1],
                    bias: v[2],
                },
                second: ConvVars {
                    weight: v[3],
                    bias: v[4],
                },
                proj: (v.len() == 7).then(|| ConvVars {
                    weight: v[5],
                    bias: v[6],
                }),
            };
            residual_block2d(g, v[0], &block, dilation).unwrap()
        },
        STEP,
    )
}

pub fn upsample(seed: u64) -> f64 {
    let mut r = rng(seed);
    let factor = [2, 4][(seed % 2) as usize];
    let x = random_tensor(&mut r, &[2, 3, 4], -1.0, 1.0);
    gradcheck(&[x], &|g, v| g.upsample_bilinear(v[0], factor).unwrap(), STEP)
}

pub fn softmax(seed: u64) -> f64 {
    let mut r = rng(seed);
    let axis = (seed % 3) as usize;
    let x = random_tensor(&mut r, &[4, 3, 5], -3.0, 3.0);
    gradcheck(&[x], &|g, v| g.softmax(v[0], axis).unwrap(), STEP)
}

pub fn soft_argmin_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let s = random_tensor(&mut r, &[5, 3, 4], -3.0, 3.0);
    gradcheck(&[s], &|g, v| soft_argmin(g, v[0]).unwrap().0, STEP)
}

pub fn matchability(seed: u64) -> f64 {
    let mut r = rng(seed);
    let s = random_tensor(&mut r, &[6, 3, 4], -3.0, 3.0);
    gradcheck(
        &[s],
        &|g, v| {
            let (d, p) = soft_argmin(g, v[0]).unwrap();
            g.matchability(p, d).unwrap()
        },
        STEP,
    )
}

pub fn cost_volume(seed: u64) -> f64 {
    let mut r = rng(seed);
    let l = random_tensor(&mut r, &[3, 4, 6], -1.0, 1.0);
    let rt = random_tensor(&mut r, &[3, 4, 6], -1.0, 1.0);
    gradcheck(&[l, rt], &|g, v| g.cost_volume(v[0], v[1], 4).unwrap(), STEP)
}

fn random_gt(r: &mut impl Rng, h: usize, w: usize, hi: f64) -> (Tensor<f64>, Mask) {
    let gt = random_tensor(r, &[h, w], 0.0, hi);
    let mask = Mask::from_fn(h, w, |_, _| r.random_bool(0.8));
    (gt, mask)
}

pub fn disparity_loss_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (gt, mask) = random_gt(&mut r, 5, 6, 12.0);
    let pred = Tensor::from_fn(&[5, 6], |i| gt.data()[i] + r.random_range(-3.0..3.0));
    gradcheck(&[pred], &|g, v| disparity_loss(g, v[0], &gt, &mask).unwrap(), STEP)
}

pub fn nsce_loss_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (gt, mask) = random_gt(&mut r, 3, 5, 3.0);
    let s = random_tensor(&mut r, &[4, 3, 5], -3.0, 3.0);
    gradcheck(
        &[s],
        &|g, v| nsce_loss(g, v[0], &gt, &mask, 1.0, &mut rng(seed ^ 0xA5)).unwrap(),
        STEP,
    )
}

pub fn smoothness_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let img = random_tensor(&mut r, &[3, 6, 7], 0.0, 1.0);
    let d = random_tensor(&mut r, &[6, 7], 0.0, 10.0);
    gradcheck(&[d], &|g, v| smoothness_loss(g, v[0], &img, 10.0).unwrap(), STEP)
}

/// A network small enough for exhaustive finite differences.
pub fn micro_config() -> ModelConfig {
    ModelConfig {
        ndisp: 8,
        cv_scale: 4,
        feat_channels: 2,
        enc_channels: 2,
        enc_blocks: 1,
        agg_3d_channels: vec![2],
        agg_2d_blocks: 1,
        refine_channels: 2,
        refine_blocks: 1,
    }
}

/// Full objective of the micro network with respect to every weight.
pub fn total_loss_case(seed: u64) -> f64 {
    let cfg = micro_config();
    let ws = WeightSet::<f64>::init(&cfg, seed).unwrap();
    let names: Vec<String> = ws.iter().map(|(n, _)| n.to_owned()).collect();
    let tensors: Vec<Tensor<f64>> = ws.iter().map(|(_, t)| t.clone()).collect();
    let mut r = rng(seed);
    let (h, w) = (8, 12);
    let pair = StereoPair::new(
        random_tensor(&mut r, &[3, h, w], 0.0, 1.0),
        random_tensor(&mut r, &[3, h, w], 0.0, 1.0),
    )
    .unwrap();
    let (gt, mask) = random_gt(&mut r, h, w, 7.0);
    let sample = LabeledSample::new(pair, gt, mask).unwrap();
    gradcheck(
        &tensors,
        &|g: &mut Graph<f64>, v: &[Var]| {
            let p: Params = names.iter().cloned().zip(v.iter().copied()).collect();
            let l = g.constant(sample.pair.left.clone());
            let rr = g.constant(sample.pair.right.clone());
            let out = forward_graph(g, &p, &cfg, l, rr).unwrap();
            let loss = total_loss(
                g,
                &out,
                &sample,
                cfg.cv_scale,
                &LossConfig::default(),
                &mut rng(seed ^ 0x5A),
            )
            .unwrap();
            loss.total
        },
        STEP,
    )
}
