//! im2col/GEMM convolution kernels shared by the 2-D and 3-D ops.
//!
//! A 2-D convolution is run as a 3-D one with unit depth and a depth-1
//! kernel. Work is split into bands of output rows so the column buffer
//! stays bounded on large images.

use crate::error::{Error, Result};
use crate::real::Real;

const BAND_BUDGET: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kd: usize,
    pub k: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad_d: usize,
    pub pad: usize,
    pub od: usize,
    pub oh: usize,
    pub ow: usize,
}

fn out_extent(n: usize, k: usize, stride: usize, dilation: usize, pad: usize) -> Result<usize> {
    let span = dilation * (k - 1) + 1;
    if n + 2 * pad < span {
        return Err(Error::shape(format!(
            "kernel span {span} exceeds padded input extent {}",
            n + 2 * pad
        )));
    }
    Ok((n + 2 * pad - span) / stride + 1)
}

impl ConvGeom {
    /// `input` is `[cin, d, h, w]`, `kernel` is `[cout, cin, kd, k, k]`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        input: [usize; 4],
        kernel: [usize; 5],
        stride: usize,
        dilation: usize,
        pad_d: usize,
        pad: usize,
    ) -> Result<Self> {
        let [cin, d, h, w] = input;
        let [cout, kcin, kd, kh, kw] = kernel;
        if kcin != cin {
            return Err(Error::shape(format!(
                "input has {cin} channels but weights expect {kcin}"
            )));
        }
        if kh != kw || kh % 2 == 0 || kd % 2 == 0 {
            return Err(Error::shape(format!(
                "kernel must be square with odd size, got {kd}x{kh}x{kw}"
            )));
        }
        if stride == 0 || dilation == 0 {
            return Err(Error::invalid("stride and dilation must be >= 1"));
        }
        let od = out_extent(d, kd, stride, dilation, pad_d)?;
        let oh = out_extent(h, kh, stride, dilation, pad)?;
        let ow = out_extent(w, kw, stride, dilation, pad)?;
        Ok(Self {
            cin,
            d,
            h,
            w,
            cout,
            kd,
            k: kh,
            stride,
            dilation,
            pad_d,
            pad,
            od,
            oh,
            ow,
        })
    }

    pub fn kdim(&self) -> usize {
        self.cin * self.kd * self.k * self.k
    }

    fn rows(&self) -> usize {
        self.od * self.oh
    }

    pub fn out_numel(&self) -> usize {
        self.cout * self.od * self.oh * self.ow
    }

    pub fn in_numel(&self) -> usize {
        self.cin * self.d * self.h * self.w
    }

    fn bands(&self) -> impl Iterator<Item = (usize, usize)> {
        let per = (BAND_BUDGET / (self.kdim() * self.ow).max(1)).max(1);
        let rows = self.rows();
        (0..rows).step_by(per).map(move |r0| (r0, (r0 + per).min(rows)))
    }

    /// Output columns `[lo, hi)` whose input column `ox * stride + off` is in range.
    fn valid_cols(&self, off: isize) -> (usize, usize) {
        let s = self.stride as isize;
        let w = self.w as isize;
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        let hi = if w - off <= 0 { 0 } else { (w - 1 - off) / s + 1 };
        let lo = (lo as usize).min(self.ow);
        let hi = (hi.max(0) as usize).min(self.ow);
        (lo, hi.max(lo))
    }

    /// Source (z, y) for output row `r` under kernel taps `(kz, ky)`, if in bounds.
    fn source_row(&self, r: usize, kz: usize, ky: usize) -> Option<(usize, usize)> {
        let (oz, oy) = (r / self.oh, r % self.oh);
        let iz = (oz * self.stride + kz * self.dilation) as isize - self.pad_d as isize;
        let iy = (oy * self.stride + ky * self.dilation) as isize - self.pad as isize;
        if iz < 0 || iz >= self.d as isize || iy < 0 || iy >= self.h as isize {
            None
        } else {
            Some((iz as usize, iy as usize))
        }
    }

    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
        let mut row = 0;
        for ci in 0..self.cin {
            for kz in 0..self.kd {
                for ky in 0..self.k {
                    for kx in 0..self.k {
                        f(row, ci, kz, ky, kx);
                        row += 1;
                    }
                }
            }
        }
    }

    fn im2col<T: Real>(&self, x: &[T], r0: usize, r1: usize, cols: &mut [T]) {
        let n = (r1 - r0) * self.ow;
        let (ow, s, w) = (self.ow, self.stride, self.w);
        self.for_each_tap(|row, ci, kz, ky, kx| {
            let dst = &mut cols[row * n..(row + 1) * n];
            let off = (kx * self.dilation) as isize - self.pad as isize;
            let (lo, hi) = self.valid_cols(off);
            for r in r0..r1 {
                let seg = &mut dst[(r - r0) * ow..(r - r0 + 1) * ow];
                let Some((iz, iy)) = self.source_row(r, kz, ky) else {
                    seg.fill(T::zero());
                    continue;
                };
                let src = &x[((ci * self.d + iz) * self.h + iy) * w..][..w];
                seg[..lo].fill(T::zero());
                seg[hi..].fill(T::zero());
                if lo < hi {
                    let start = (lo as isize * s as isize + off) as usize;
                    if s == 1 {
                        seg[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                    } else {
                        for (j, v) in seg[lo..hi].iter_mut().enumerate() {
                            *v = src[start + j * s];
                        }
                    }
                }
            }
        });
    }

    fn col2im_add<T: Real>(&self, cols: &[T], r0: usize, r1: usize, dx: &mut [T]) {
        let n = (r1 - r0) * self.ow;
        let (ow, s, w) = (self.ow, self.stride, self.w);
        self.for_each_tap(|row, ci, kz, ky, kx| {
            let srcrow = &cols[row * n..(row + 1) * n];
            let off = (kx * self.dilation) as isize - self.pad as isize;
            let (lo, hi) = self.valid_cols(off);
            if lo >= hi {
                return;
            }
            for r in r0..r1 {
                let Some((iz, iy)) = self.source_row(r, kz, ky) else {
                    continue;
                };
                let seg = &srcrow[(r - r0) * ow..(r - r0 + 1) * ow];
                let dst = &mut dx[((ci * self.d + iz) * self.h + iy) * w..][..w];
                let start = (lo as isize * s as isize + off) as usize;
                if s == 1 {
                    for (d, &v) in dst[start..start + (hi - lo)].iter_mut().zip(&seg[lo..hi]) {
                        *d += v;
                    }
                } else {
                    for (j, &v) in seg[lo..hi].iter().enumerate() {
                        dst[start + j * s] += v;
                    }
                }
            }
        });
    }

    pub fn forward<T: Real>(&self, x: &[T], weight: &[T], bias: &[T]) -> Vec<T> {
        let total = self.od * self.oh * self.ow;
        let kdim = self.kdim();
        let mut out = vec![T::zero(); self.out_numel()];
        let mut cols = Vec::new();
        for (r0, r1) in self.bands() {
            let n = (r1 - r0) * self.ow;
            cols.resize(kdim * n, T::zero());
            self.im2col(x, r0, r1, &mut cols);
            T::gemm(
                self.cout,
                kdim,
                n,
                T::one(),
                (weight, kdim as isize, 1),
                (&cols, n as isize, 1),
                T::zero(),
                (&mut out[r0 * self.ow..], total as isize, 1),
            );
        }
        for (plane, &b) in out.chunks_mut(total).zip(bias) {
            plane.iter_mut().for_each(|v| *v += b);
        }
        out
    }

    /// Accumulates gradients into whichever of `dx`, `dw`, `db` are given.
    pub fn backward<T: Real>(
        &self,
        x: &[T],
        weight: &[T],
        dy: &[T],
        mut dx: Option<&mut [T]>,
        mut dw: Option<&mut [T]>,
        db: Option<&mut [T]>,
    ) {
        let total = self.od * self.oh * self.ow;
        let kdim = self.kdim();
        if let Some(db) = db {
            for (b, plane) in db.iter_mut().zip(dy.chunks(total)) {
                *b += plane.iter().copied().sum::<T>();
            }
        }
        if dx.is_none() && dw.is_none() {
            return;
        }
        let mut cols = Vec::new();
        for (r0, r1) in self.bands() {
            let n = (r1 - r0) * self.ow;
            cols.resize(kdim * n, T::zero());
            let dy_band = &dy[r0 * self.ow..];
            if let Some(dw) = dw.as_deref_mut() {
                self.im2col(x, r0, r1, &mut cols);
                T::gemm(
                    self.cout,
                    n,
                    kdim,
                    T::one(),
                    (dy_band, total as isize, 1),
                    (&cols, 1, n as isize),
                    T::one(),
                    (dw, kdim as isize, 1),
                );
            }
            if let Some(dx) = dx.as_deref_mut() {
                T::gemm(
                    kdim,
                    self.cout,
                    n,
                    T::one(),
                    (weight, 1, kdim as isize),
                    (dy_band, total as isize, 1),
                    T::zero(),
                    (&mut cols, n as isize, 1),
                );
                self.col2im_add(&cols, r0, r1, dx);
            }
        }
    }
}
