//! Independent oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code, clippy::needless_range_loop)]

pub mod grad_cases;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stereo_core::{Graph, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Builds `loss = sum(f(inputs) * r)` for a fixed random `r` so that every
/// output element contributes with a distinct weight.
fn projected_loss(g: &mut Graph<f64>, vars: &[Var], f: &dyn Fn(&mut Graph<f64>, &[Var]) -> Var, proj_seed: u64) -> Var {
    let out = f(g, vars);
    if g.value(out).numel() == 1 {
        return out;
    }
    let shape = g.shape(out).to_vec();
    let mut r = rng(proj_seed);
    let w = g.constant(random_tensor(&mut r, &shape, -1.0, 1.0));
    let p = g.mul(out, w).unwrap();
    g.sum(p)
}

/// Largest `|analytic - fd| / max(1, |fd|)` over every input element,
/// using fp64 central differences with step `h`.
pub fn gradcheck(inputs: &[Tensor<f64>], f: &dyn Fn(&mut Graph<f64>, &[Var]) -> Var, h: f64) -> f64 {
    let eval = |ins: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.param(t.clone())).collect();
        let l = projected_loss(&mut g, &vars, f, 0xC0FFEE);
        g.value(l).item()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let l = projected_loss(&mut g, &vars, f, 0xC0FFEE);
    g.backward(l).unwrap();
    let mut worst = 0.0f64;
    for (k, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).unwrap().to_vec();
        for i in 0..inputs[k].numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let err = (analytic[i] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}

/// Direct nested-loop 2-D cross-correlation.
pub fn conv2d_oracle(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &[f64],
    stride: usize,
    dilation: usize,
    pad: usize,
) -> Tensor<f64> {
    let (cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let oh = (h + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
    let ow = (wd + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
    let mut out = Tensor::zeros(&[cout, oh, ow]);
    for co in 0..cout {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b[co];
                for ci in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky * dilation) as isize - pad as isize;
                            let ix = (ox * stride + kx * dilation) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            acc += w.at(&[co, ci, ky, kx]) * x.at(&[ci, iy as usize, ix as usize]);
                        }
                    }
                }
                out.set(&[co, oy, ox], acc);
            }
        }
    }
    out
}

/// Direct nested-loop 3-D cross-correlation.
pub fn conv3d_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Tensor<f64> {
    let s = x.shape();
    let (cin, d, h, wd) = (s[0], s[1], s[2], s[3]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let o = |n: usize| (n + 2 * pad - k) / stride + 1;
    let (od, oh, ow) = (o(d), o(h), o(wd));
    let mut out = Tensor::zeros(&[cout, od, oh, ow]);
    for co in 0..cout {
        for oz in 0..od {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for kz in 0..k {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iz = (oz * stride + kz) as isize - pad as isize;
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    let inside = |v: isize, n: usize| v >= 0 && v < n as isize;
                                    if !(inside(iz, d) && inside(iy, h) && inside(ix, wd)) {
                                        continue;
                                    }
                                    acc += w.at(&[co, ci, kz, ky, kx])
                                        * x.at(&[ci, iz as usize, iy as usize, ix as usize]);
                                }
                            }
                        }
                    }
                    out.set(&[co, oz, oy, ox], acc);
                }
            }
        }
    }
    out
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Brute-force soft argmin: explicit exp/normalise/weighted sum per pixel.
pub fn soft_argmin_oracle(scores: &Tensor<f64>) -> Vec<f64> {
    let (d, h, w) = (scores.shape()[0], scores.shape()[1], scores.shape()[2]);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let m = (0..d).map(|k| scores.at(&[k, y, x])).fold(f64::MIN, f64::max);
            let e: Vec<f64> = (0..d).map(|k| (scores.at(&[k, y, x]) - m).exp()).collect();
            let z: f64 = e.iter().sum();
            out.push(e.iter().enumerate().map(|(k, v)| k as f64 * v / z).sum());
        }
    }
    out
}

/// `out[c,d,y,x] = l[c,y,x] * r[c,y,x-d]`, zero where `x < d`.
pub fn cost_volume_oracle(l: &Tensor<f64>, r: &Tensor<f64>, ndisp: usize) -> Tensor<f64> {
    let (c, h, w) = (l.shape()[0], l.shape()[1], l.shape()[2]);
    let mut out = Tensor::zeros(&[c, ndisp, h, w]);
    for ch in 0..c {
        for d in 0..ndisp {
            for y in 0..h {
                for x in d..w {
                    out.set(&[ch, d, y, x], l.at(&[ch, y, x]) * r.at(&[ch, y, x - d]));
                }
            }
        }
    }
    out
}

/// Per-pixel loop version of the metric definitions.
pub struct OracleMetrics {
    pub epe: f64,
    pub rmse: f64,
    pub bad: Vec<f64>,
    pub a90: f64,
    pub a95: f64,
}

pub fn metrics_oracle(pred: &[f64], gt: &[f64], mask: &[bool], thresholds: &[f64]) -> OracleMetrics {
    let mut e = Vec::new();
    for i in 0..pred.len() {
        if mask[i] {
            e.push((pred[i] - gt[i]).abs());
        }
    }
    let n = e.len() as f64;
    let mut sum = 0.0;
    let mut sq = 0.0;
    for v in &e {
        sum += v;
        sq += v * v;
    }
    let bad = thresholds
        .iter()
        .map(|t| e.iter().filter(|v| **v > *t).count() as f64 / n)
        .collect();
    let mut sorted = e.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |p: f64| {
        let mut k = 1;
        while (k as f64) < p / 100.0 * n {
            k += 1;
        }
        sorted[k - 1]
    };
    OracleMetrics {
        epe: sum / n,
        rmse: (sq / n).sqrt(),
        bad,
        a90: pick(90.0),
        a95: pick(95.0),
    }
}
