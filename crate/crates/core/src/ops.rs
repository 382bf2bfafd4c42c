//! Forward/backward kernels for the non-convolution ops.

use crate::real::Real;

/// Per-output-index interpolation taps along one axis for
/// half-pixel-centred bilinear upsampling.
pub(crate) fn bilinear_taps(n: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..n * factor)
        .map(|o| {
            let src = ((o as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub(crate) fn upsample_forward<T: Real>(x: &[T], c: usize, h: usize, w: usize, f: usize) -> Vec<T> {
    let (ty, tx) = (bilinear_taps(h, f), bilinear_taps(w, f));
    let (oh, ow) = (h * f, w * f);
    let mut out = Vec::with_capacity(c * oh * ow);
    for plane in x.chunks(h * w) {
        for &(y0, y1, ly) in &ty {
            let ly = T::of(ly);
            let (r0, r1) = (&plane[y0 * w..][..w], &plane[y1 * w..][..w]);
            for &(x0, x1, lx) in &tx {
                let lx = T::of(lx);
                let top = r0[x0] + (r0[x1] - r0[x0]) * lx;
                let bot = r1[x0] + (r1[x1] - r1[x0]) * lx;
                out.push(top + (bot - top) * ly);
            }
        }
    }
    out
}

pub(crate) fn upsample_backward<T: Real>(dy: &[T], dx: &mut [T], h: usize, w: usize, f: usize) {
    let (ty, tx) = (bilinear_taps(h, f), bilinear_taps(w, f));
    let ow = w * f;
    for (plane, gplane) in dx.chunks_mut(h * w).zip(dy.chunks(h * f * ow)) {
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            let ly = T::of(ly);
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let lx = T::of(lx);
                let g = gplane[oy * ow + ox];
                let (gt, gb) = (g * (T::one() - ly), g * ly);
                plane[y0 * w + x0] += gt * (T::one() - lx);
                plane[y0 * w + x1] += gt * lx;
                plane[y1 * w + x0] += gb * (T::one() - lx);
                plane[y1 * w + x1] += gb * lx;
            }
        }
    }
}

/// Splits a shape around `axis` into `(outer, n, inner)`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn softmax_forward<T: Real>(x: &[T], outer: usize, n: usize, inner: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        let base = o * n * inner;
        for i in 0..inner {
            let idx = |d: usize| base + d * inner + i;
            let max = (0..n).map(|d| x[idx(d)]).fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for d in 0..n {
                let e = (x[idx(d)] - max).exp();
                out[idx(d)] = e;
                sum += e;
            }
            for d in 0..n {
                out[idx(d)] /= sum;
            }
        }
    }
    out
}

pub(crate) fn softmax_backward<T: Real>(p: &[T], dy: &[T], dx: &mut [T], outer: usize, n: usize, inner: usize) {
    for o in 0..outer {
        let base = o * n * inner;
        for i in 0..inner {
            let idx = |d: usize| base + d * inner + i;
            let dot: T = (0..n).map(|d| p[idx(d)] * dy[idx(d)]).sum();
            for d in 0..n {
                dx[idx(d)] += p[idx(d)] * (dy[idx(d)] - dot);
            }
        }
    }
}

/// Log-softmax over axis 0 of a `[n, inner]` buffer.
pub(crate) fn log_softmax_axis0<T: Real>(x: &[T], n: usize, inner: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for i in 0..inner {
        let max = (0..n).map(|d| x[d * inner + i]).fold(T::neg_infinity(), T::max);
        let lse = (0..n).map(|d| (x[d * inner + i] - max).exp()).sum::<T>().ln() + max;
        for d in 0..n {
            out[d * inner + i] = x[d * inner + i] - lse;
        }
    }
    out
}

/// Integer disparities `d` with `|d - est| <= 1`, clipped to `[0, n)`.
pub(crate) fn match_window<T: Real>(est: T, n: usize) -> std::ops::RangeInclusive<usize> {
    let est = est.as_f64();
    let lo = (est - 1.0).ceil().max(0.0) as usize;
    let hi = ((est + 1.0).floor().max(0.0) as usize).min(n - 1);
    lo..=hi
}

pub(crate) fn window_mass<T: Real>(prob: &[T], n: usize, inner: usize, est: &[T]) -> Vec<T> {
    (0..inner)
        .map(|i| {
            match_window(est[i], n)
                .map(|d| prob[d * inner + i])
                .fold(T::zero(), |a, b| a + b)
        })
        .collect()
}

#[inline]
pub fn smooth_l1<T: Real>(x: T) -> T {
    let a = x.abs();
    if a < T::one() {
        T::of(0.5) * x * x
    } else {
        a - T::of(0.5)
    }
}

#[inline]
pub(crate) fn smooth_l1_grad<T: Real>(x: T) -> T {
    x.max(-T::one()).min(T::one())
}

#[inline]
pub(crate) fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}
