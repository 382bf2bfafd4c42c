//! Tape-based reverse-mode automatic differentiation.
//!
//! Every op appends a node holding its output value and enough state to
//! run its backward rule. Nodes are created in topological order, so
//! [`Graph::backward`] is a single reverse sweep.

use crate::conv::ConvGeom;
use crate::error::{Error, Result};
use crate::ops;
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Mean(Var),
    LeakyRelu(Var, T),
    Reshape(Var),
    Concat(Vec<Var>),
    Conv {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    Upsample {
        x: Var,
        factor: usize,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    Expectation(Var),
    Matchability {
        prob: Var,
        est: Var,
    },
    CostVolume {
        left: Var,
        right: Var,
        ndisp: usize,
    },
    SmoothL1 {
        pred: Var,
        target: Vec<T>,
        mask: Vec<bool>,
        scale: T,
    },
    CrossEntropy {
        logits: Var,
        target: Vec<T>,
        scale: T,
    },
    Smoothness {
        disp: Var,
        wx: Vec<T>,
        wy: Vec<T>,
        scale: T,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Recorded computation for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf; it takes part in differentiation iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        self.push(tensor, Op::Leaf)
    }

    pub fn param(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    pub fn take_value(&mut self, v: Var) -> Tensor<T> {
        self.nodes[v.0].value.clone()
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, shape: &[usize], data: Vec<T>, inputs: &[Var], op: Op<T>) -> Var {
        let rg = inputs.iter().any(|&v| self.needs_grad(v));
        let value = Tensor::new(shape, data)
            .expect("op produced consistent shape")
            .with_requires_grad(rg);
        self.push(value, op)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push_op(&shape, data, &[a, b], Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push_op(&shape, data, &[a, b], Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let data = self.data(a).iter().map(|&x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push_op(&shape, data, &[a], Op::Scale(a, c))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().copied().sum();
        self.push_op(&[1], vec![s], &[a], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = T::of(self.data(a).len() as f64);
        let s = self.data(a).iter().copied().sum::<T>() / n;
        self.push_op(&[1], vec![s], &[a], Op::Mean(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let data = self
            .data(a)
            .iter()
            .map(|&x| if x > T::zero() { x } else { x * slope })
            .collect();
        let shape = self.shape(a).to_vec();
        self.push_op(&shape, data, &[a], Op::LeakyRelu(a, slope))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).numel() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape(a)
            )));
        }
        let data = self.data(a).to_vec();
        Ok(self.push_op(shape, data, &[a], Op::Reshape(a)))
    }

    /// Concatenates along axis 0; trailing dimensions must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::invalid("concat of zero tensors"));
        };
        let tail = self.shape(first)[1..].to_vec();
        let mut lead = 0;
        for &p in parts {
            if self.shape(p)[1..] != tail[..] {
                return Err(Error::shape(format!(
                    "concat: trailing dims {:?} vs {:?}",
                    &self.shape(p)[1..],
                    tail
                )));
            }
            lead += self.shape(p)[0];
        }
        let data = parts.iter().flat_map(|&p| self.data(p).iter().copied()).collect();
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        Ok(self.push_op(&shape, data, parts, Op::Concat(parts.to_vec())))
    }

    /// 2-D cross-correlation. `x: [C_in,H,W]`, `w: [C_out,C_in,k,k]`, `b: [C_out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, dilation: usize, padding: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 3 || ws.len() != 4 {
            return Err(Error::shape(format!(
                "conv2d expects [C,H,W] input and [O,C,k,k] weights, got {xs:?} and {ws:?}"
            )));
        }
        let geom = ConvGeom::new(
            [xs[0], 1, xs[1], xs[2]],
            [ws[0], ws[1], 1, ws[2], ws[3]],
            stride,
            dilation,
            0,
            padding,
        )?;
        self.conv(x, w, b, geom, vec![geom.cout, geom.oh, geom.ow])
    }

    /// 3-D cross-correlation. `x: [C_in,D,H,W]`, `w: [C_out,C_in,k,k,k]`, `b: [C_out]`.
    pub fn conv3d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 4 || ws.len() != 5 {
            return Err(Error::shape(format!(
                "conv3d expects [C,D,H,W] input and [O,C,k,k,k] weights, got {xs:?} and {ws:?}"
            )));
        }
        if ws[2] != ws[3] {
            return Err(Error::shape(format!("conv3d kernel must be cubic, got {ws:?}")));
        }
        let geom = ConvGeom::new(
            [xs[0], xs[1], xs[2], xs[3]],
            [ws[0], ws[1], ws[2], ws[3], ws[4]],
            stride,
            1,
            padding,
            padding,
        )?;
        self.conv(x, w, b, geom, vec![geom.cout, geom.od, geom.oh, geom.ow])
    }

    fn conv(&mut self, x: Var, w: Var, b: Var, geom: ConvGeom, shape: Vec<usize>) -> Result<Var> {
        if self.shape(b) != [geom.cout] {
            return Err(Error::shape(format!(
                "bias shape {:?} does not match {} output channels",
                self.shape(b),
                geom.cout
            )));
        }
        let data = geom.forward(self.data(x), self.data(w), self.data(b));
        Ok(self.push_op(&shape, data, &[x, w, b], Op::Conv { x, w, b, geom }))
    }

    /// Half-pixel-centred bilinear upsampling of a `[C,H,W]` tensor.
    pub fn upsample_bilinear(&mut self, x: Var, factor: usize) -> Result<Var> {
        if factor < 1 {
            return Err(Error::invalid("upsample factor must be >= 1"));
        }
        let s = self.shape(x);
        if s.len() != 3 {
            return Err(Error::shape(format!("upsample expects [C,H,W], got {s:?}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let data = ops::upsample_forward(self.data(x), c, h, w, factor);
        Ok(self.push_op(&[c, h * factor, w * factor], data, &[x], Op::Upsample { x, factor }))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x);
        if axis >= s.len() {
            return Err(Error::shape(format!("softmax axis {axis} out of range for {s:?}")));
        }
        let (o, n, i) = ops::axis_split(s, axis);
        let data = ops::softmax_forward(self.data(x), o, n, i);
        let shape = s.to_vec();
        Ok(self.push_op(&shape, data, &[x], Op::Softmax { x, axis }))
    }

    /// `out[y,x] = sum_d d * p[d,y,x]` over a `[D,H,W]` distribution.
    pub fn expectation(&mut self, p: Var) -> Result<Var> {
        let s = self.shape(p);
        if s.len() != 3 {
            return Err(Error::shape(format!("expectation expects [D,H,W], got {s:?}")));
        }
        let (n, h, w) = (s[0], s[1], s[2]);
        let inner = h * w;
        let top = T::of((n - 1) as f64);
        let pd = self.data(p);
        let data = (0..inner)
            .map(|i| {
                (0..n)
                    .map(|d| T::of(d as f64) * pd[d * inner + i])
                    .sum::<T>()
                    .max(T::zero())
                    .min(top)
            })
            .collect();
        Ok(self.push_op(&[h, w], data, &[p], Op::Expectation(p)))
    }

    /// Log of the probability mass within one disparity of `est`.
    /// No gradient flows to `est`; the window is piecewise constant in it.
    pub fn matchability(&mut self, prob: Var, est: Var) -> Result<Var> {
        let (ps, es) = (self.shape(prob), self.shape(est));
        if ps.len() != 3 || es != &ps[1..] {
            return Err(Error::shape(format!(
                "matchability expects [D,H,W] and [H,W], got {ps:?} and {es:?}"
            )));
        }
        let (n, h, w) = (ps[0], ps[1], ps[2]);
        let mass = ops::window_mass(self.data(prob), n, h * w, self.data(est));
        let data = mass
            .into_iter()
            .map(|m| m.max(T::min_positive_value()).min(T::one()).ln())
            .collect();
        Ok(self.push_op(&[h, w], data, &[prob], Op::Matchability { prob, est }))
    }

    /// Channel-preserving correlation volume:
    /// `out[c,d,y,x] = left[c,y,x] * right[c,y,x-d]`, zero where `x < d`.
    pub fn cost_volume(&mut self, left: Var, right: Var, ndisp: usize) -> Result<Var> {
        self.same_shape(left, right, "cost volume")?;
        let s = self.shape(left);
        if s.len() != 3 {
            return Err(Error::shape(format!("cost volume expects [C,H,W], got {s:?}")));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        if ndisp == 0 || ndisp > w {
            return Err(Error::shape(format!(
                "disparity count {ndisp} must be in 1..={w} (feature width)"
            )));
        }
        let (l, r) = (self.data(left), self.data(right));
        let mut data = vec![T::zero(); c * ndisp * h * w];
        for ch in 0..c {
            for d in 0..ndisp {
                for y in 0..h {
                    let row = (ch * h + y) * w;
                    let out = &mut data[((ch * ndisp + d) * h + y) * w..][..w];
                    for x in d..w {
                        out[x] = l[row + x] * r[row + x - d];
                    }
                }
            }
        }
        Ok(self.push_op(
            &[c, ndisp, h, w],
            data,
            &[left, right],
            Op::CostVolume { left, right, ndisp },
        ))
    }

    /// `scale * sum_{mask} smooth_l1(pred - target)`.
    pub fn smooth_l1_sum(&mut self, pred: Var, target: Vec<T>, mask: Vec<bool>, scale: T) -> Result<Var> {
        let n = self.value(pred).numel();
        if target.len() != n || mask.len() != n {
            return Err(Error::shape(format!(
                "smooth-L1 target/mask length {}/{} vs prediction {n}",
                target.len(),
                mask.len()
            )));
        }
        let s = self
            .data(pred)
            .iter()
            .zip(&target)
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|((&p, &t), _)| ops::smooth_l1(p - t))
            .sum::<T>()
            * scale;
        Ok(self.push_op(
            &[1],
            vec![s],
            &[pred],
            Op::SmoothL1 {
                pred,
                target,
                mask,
                scale,
            },
        ))
    }

    /// `-scale * sum target * log_softmax(logits)` with softmax over axis 0.
    pub fn cross_entropy(&mut self, logits: Var, target: Vec<T>, scale: T) -> Result<Var> {
        let s = self.shape(logits);
        if target.len() != self.value(logits).numel() {
            return Err(Error::shape(format!(
                "cross-entropy target length {} vs logits {s:?}",
                target.len()
            )));
        }
        let (n, inner) = (s[0], self.value(logits).numel() / s[0]);
        let lp = ops::log_softmax_axis0(self.data(logits), n, inner);
        let ce = -lp
            .iter()
            .zip(&target)
            .filter(|(_, &t)| t != T::zero())
            .map(|(&l, &t)| t * l)
            .sum::<T>()
            * scale;
        Ok(self.push_op(&[1], vec![ce], &[logits], Op::CrossEntropy { logits, target, scale }))
    }

    /// Edge-weighted second-difference penalty on a `[H,W]` map.
    /// `wx`, `wy` are `[H,W]` weight maps; only interior stencils contribute.
    pub fn smoothness(&mut self, disp: Var, wx: Vec<T>, wy: Vec<T>, scale: T) -> Result<Var> {
        let s = self.shape(disp);
        if s.len() != 2 || wx.len() != s[0] * s[1] || wy.len() != wx.len() {
            return Err(Error::shape(format!(
                "smoothness expects [H,W] disparity with matching weights, got {s:?}"
            )));
        }
        let (h, w) = (s[0], s[1]);
        let d = self.data(disp);
        let mut acc = T::zero();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x > 0 && x + 1 < w {
                    acc += (d[i - 1] - d[i] - d[i] + d[i + 1]).abs() * wx[i];
                }
                if y > 0 && y + 1 < h {
                    acc += (d[i - w] - d[i] - d[i] + d[i + w]).abs() * wy[i];
                }
            }
        }
        Ok(self.push_op(&[1], vec![acc * scale], &[disp], Op::Smoothness { disp, wx, wy, scale }))
    }

    /// Populates `grad` on every node that requires it. Safe to call more
    /// than once; each call recomputes gradients from scratch.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        if self.needs_grad(loss) {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let nlive = grads.len();
        for (i, node) in self.nodes.iter_mut().enumerate() {
            if !node.value.requires_grad() {
                node.value.set_grad(None);
                continue;
            }
            let g = if i < nlive { grads[i].take() } else { None };
            let n = node.value.numel();
            node.value.set_grad(Some(g.unwrap_or_else(|| vec![T::zero(); n])));
        }
        Ok(())
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        if !self.needs_grad(v) {
            return None;
        }
        let n = self.value(v).numel();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = self.slot(grads, v) {
                        d.iter_mut().zip(g).for_each(|(d, &g)| *d += g);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a).to_vec(), self.data(*b).to_vec());
                if let Some(d) = self.slot(grads, *a) {
                    for ((d, &g), &y) in d.iter_mut().zip(g).zip(&bd) {
                        *d += g * y;
                    }
                }
                if let Some(d) = self.slot(grads, *b) {
                    for ((d, &g), &x) in d.iter_mut().zip(g).zip(&ad) {
                        *d += g * x;
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(d) = self.slot(grads, *a) {
                    d.iter_mut().zip(g).for_each(|(d, &g)| *d += g * *c);
                }
            }
            Op::Sum(a) => {
                if let Some(d) = self.slot(grads, *a) {
                    d.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean(a) => {
                let n = T::of(self.value(*a).numel() as f64);
                if let Some(d) = self.slot(grads, *a) {
                    d.iter_mut().for_each(|d| *d += g[0] / n);
                }
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.data(*a);
                if let Some(d) = self.slot(grads, *a) {
                    for ((d, &g), &x) in d.iter_mut().zip(g).zip(x) {
                        *d += if x > T::zero() { g } else { g * *slope };
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(d) = self.slot(grads, *a) {
                    d.iter_mut().zip(g).for_each(|(d, &g)| *d += g);
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    if let Some(d) = self.slot(grads, p) {
                        d.iter_mut().zip(&g[off..off + n]).for_each(|(d, &g)| *d += g);
                    }
                    off += n;
                }
            }
            Op::Conv { x, w, b, geom } => {
                let (xd, wd) = (self.data(*x), self.data(*w));
                let mut dx = self.needs_grad(*x).then(|| vec![T::zero(); geom.in_numel()]);
                let mut dw = self.needs_grad(*w).then(|| vec![T::zero(); wd.len()]);
                let mut db = self.needs_grad(*b).then(|| vec![T::zero(); geom.cout]);
                geom.backward(xd, wd, g, dx.as_deref_mut(), dw.as_deref_mut(), db.as_deref_mut());
                for (v, local) in [(*x, dx), (*w, dw), (*b, db)] {
                    if let (Some(local), Some(d)) = (local, self.slot(grads, v)) {
                        d.iter_mut().zip(&local).for_each(|(d, &l)| *d += l);
                    }
                }
            }
            Op::Upsample { x, factor } => {
                let s = self.shape(*x);
                let (h, w) = (s[1], s[2]);
                if let Some(d) = self.slot(grads, *x) {
                    ops::upsample_backward(g, d, h, w, *factor);
                }
            }
            Op::Softmax { x, axis } => {
                let (o, n, inner) = ops::axis_split(out.shape(), *axis);
                if let Some(d) = self.slot(grads, *x) {
                    ops::softmax_backward(out.data(), g, d, o, n, inner);
                }
            }
            Op::Expectation(p) => {
                let inner = out.numel();
                if let Some(d) = self.slot(grads, *p) {
                    for (j, d) in d.iter_mut().enumerate() {
                        *d += T::of((j / inner) as f64) * g[j % inner];
                    }
                }
            }
            Op::Matchability { prob, est } => {
                let s = self.shape(*prob);
                let (n, inner) = (s[0], s[1] * s[2]);
                let pd = self.data(*prob);
                let mass = ops::window_mass(pd, n, inner, self.data(*est));
                let e = self.data(*est);
                if let Some(d) = self.slot(grads, *prob) {
                    for i in 0..inner {
                        let m = mass[i].max(T::min_positive_value());
                        for k in ops::match_window(e[i], n) {
                            d[k * inner + i] += g[i] / m;
                        }
                    }
                }
            }
            Op::CostVolume { left, right, ndisp } => {
                let s = self.shape(*left);
                let (c, h, w) = (s[0], s[1], s[2]);
                let (l, r) = (self.data(*left), self.data(*right));
                let plane = |ch: usize, d: usize, y: usize| ((ch * ndisp + d) * h + y) * w;
                if let Some(dl) = self.slot(grads, *left) {
                    for ch in 0..c {
                        for d in 0..*ndisp {
                            for y in 0..h {
                                let row = (ch * h + y) * w;
                                let go = &g[plane(ch, d, y)..][..w];
                                for x in d..w {
                                    dl[row + x] += go[x] * r[row + x - d];
                                }
                            }
                        }
                    }
                }
                if let Some(dr) = self.slot(grads, *right) {
                    for ch in 0..c {
                        for d in 0..*ndisp {
                            for y in 0..h {
                                let row = (ch * h + y) * w;
                                let go = &g[plane(ch, d, y)..][..w];
                                for x in d..w {
                                    dr[row + x - d] += go[x] * l[row + x];
                                }
                            }
                        }
                    }
                }
            }
            Op::SmoothL1 {
                pred,
                target,
                mask,
                scale,
            } => {
                let p = self.data(*pred);
                if let Some(d) = self.slot(grads, *pred) {
                    for i in 0..p.len() {
                        if mask[i] {
                            d[i] += g[0] * *scale * ops::smooth_l1_grad(p[i] - target[i]);
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, target, scale } => {
                let s = self.shape(*logits);
                let (n, inner) = (s[0], self.value(*logits).numel() / s[0]);
                let p = ops::softmax_forward(self.data(*logits), 1, n, inner);
                if let Some(d) = self.slot(grads, *logits) {
                    for i in 0..inner {
                        let tsum: T = (0..n).map(|k| target[k * inner + i]).sum();
                        if tsum == T::zero() {
                            continue;
                        }
                        for k in 0..n {
                            let j = k * inner + i;
                            d[j] += g[0] * *scale * (p[j] * tsum - target[j]);
                        }
                    }
                }
            }
            Op::Smoothness { disp, wx, wy, scale } => {
                let s = self.shape(*disp);
                let (h, w) = (s[0], s[1]);
                let dd = self.data(*disp);
                if let Some(d) = self.slot(grads, *disp) {
                    let gs = g[0] * *scale;
                    for y in 0..h {
                        for x in 0..w {
                            let i = y * w + x;
                            if x > 0 && x + 1 < w {
                                let k = ops::sign(dd[i - 1] - dd[i] - dd[i] + dd[i + 1]) * wx[i] * gs;
                                d[i - 1] += k;
                                d[i] -= k + k;
                                d[i + 1] += k;
                            }
                            if y > 0 && y + 1 < h {
                                let k = ops::sign(dd[i - w] - dd[i] - dd[i] + dd[i + w]) * wy[i] * gs;
                                d[i - w] += k;
                                d[i] -= k + k;
                                d[i + w] += k;
                            }
                        }
                    }
                }
            }
        }
    }
}
