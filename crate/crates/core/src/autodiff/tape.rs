//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every op appends a node holding its forward value and enough of its
//! inputs to run the backward rule. Nodes are only ever appended, so the
//! tape is topologically ordered by construction and [`Tape::backward`]
//! is a single reverse sweep.

use super::param::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Mul(Var, Var),
    AddChannel(Var, Var),
    MulChannel(Var, Var),
    MatMul(Var, Var),
    Conv1d {
        x: Var,
        w: Var,
        stride: usize,
        padding: usize,
    },
    Relu(Var),
    Abs(Var),
    Sigmoid(Var),
    GlobalAvgPool(Var),
    SoftThreshold(Var, Var),
    Log(Var),
    ReduceMean(Var),
    ReduceSum(Var),
    GatherClass(Var, Vec<usize>),
    Softmax(Var),
    LogSoftmax(Var),
    Grl(Var, f64),
    Affine(Var, f64),
    ClampMax(Var, f64),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of the loss with respect to every node reached by a
/// backward sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

/// Valid output positions `t` for kernel tap `k`: those with
/// `0 <= t*stride + k - pad < len`.
fn tap_range(k: usize, pad: usize, stride: usize, len: usize, lout: usize) -> (usize, usize) {
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    if len + pad <= k {
        return (0, 0);
    }
    let hi = ((len - 1 + pad - k) / stride + 1).min(lout);
    (lo.min(hi), hi)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(outer, channels, inner)` split of a tensor whose dim 1 is the
/// channel axis.
fn channel_split(shape: &[usize]) -> (usize, usize, usize) {
    let outer = shape[0];
    let c = shape[1];
    let inner = shape[2..].iter().product();
    (outer, c, inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Input that receives no parameter update. Its gradient is still
    /// reported by [`Gradients::get`].
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push("constant", t, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        self.push("param", store.get(id).value.clone(), Op::Param(id))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("add", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        self.push("add", t, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("mul", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        self.push("mul", t, Op::Mul(a, b))
    }

    fn check_channel(&self, op: &'static str, x: Var, c: Var) -> Result<(usize, usize, usize)> {
        let (xs, cs) = (self.value(x).shape(), self.value(c).shape());
        if xs.len() < 2 || cs.len() != 1 || cs[0] != xs[1] {
            return Err(shape_err(op, format!("{xs:?} with per-channel {cs:?}")));
        }
        Ok(channel_split(xs))
    }

    /// `x + b` with `b` (length C) broadcast along dim 1 of `x`.
    pub fn add_channel(&mut self, x: Var, b: Var) -> Result<Var> {
        let (outer, c, inner) = self.check_channel("add_channel", x, b)?;
        let mut out = self.value(x).clone();
        let bias = self.value(b).data();
        let d = out.data_mut();
        for o in 0..outer {
            for ch in 0..c {
                let base = (o * c + ch) * inner;
                d[base..base + inner].iter_mut().for_each(|v| *v += bias[ch]);
            }
        }
        self.push("add_channel", out, Op::AddChannel(x, b))
    }

    /// `x * s` with `s` (length C) broadcast along dim 1 of `x`.
    pub fn mul_channel(&mut self, x: Var, s: Var) -> Result<Var> {
        let (outer, c, inner) = self.check_channel("mul_channel", x, s)?;
        let mut out = self.value(x).clone();
        let scale = self.value(s).data();
        let d = out.data_mut();
        for o in 0..outer {
            for ch in 0..c {
                let base = (o * c + ch) * inner;
                d[base..base + inner].iter_mut().for_each(|v| *v *= scale[ch]);
            }
        }
        self.push("mul_channel", out, Op::MulChannel(x, s))
    }

    /// `(n, k) x (k, m) -> (n, m)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let (xs, ys) = (x.shape(), y.shape());
        if xs.len() != 2 || ys.len() != 2 || xs[1] != ys[0] {
            return Err(shape_err("matmul", format!("{xs:?} x {ys:?}")));
        }
        let (n, k, m) = (xs[0], xs[1], ys[1]);
        let mut out = vec![0.0; n * m];
        let (xd, yd) = (x.data(), y.data());
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a_ip = xd[i * k + p];
                if a_ip == 0.0 {
                    continue;
                }
                let brow = &yd[p * m..(p + 1) * m];
                for (o, bv) in row.iter_mut().zip(brow) {
                    *o += a_ip * bv;
                }
            }
        }
        let t = Tensor::new(vec![n, m], out)?;
        self.push("matmul", t, Op::MatMul(a, b))
    }

    /// Cross-correlation of `x: (batch, c_in, len)` with
    /// `w: (c_out, c_in, k)`, zero padding on both ends.
    pub fn conv1d(&mut self, x: Var, w: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (xs, ws) = (xv.shape(), wv.shape());
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] || stride == 0 {
            return Err(shape_err(
                "conv1d",
                format!("input {xs:?}, kernel {ws:?}, stride {stride}"),
            ));
        }
        let (b, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, k) = (ws[0], ws[2]);
        if len + 2 * padding < k {
            return Err(shape_err("conv1d", format!("kernel {k} longer than padded input")));
        }
        let lout = (len + 2 * padding - k) / stride + 1;
        let mut out = vec![0.0; b * cout * lout];
        let (xd, wd) = (xv.data(), wv.data());
        for bi in 0..b {
            for co in 0..cout {
                let orow = &mut out[(bi * cout + co) * lout..][..lout];
                for ci in 0..cin {
                    let xrow = &xd[(bi * cin + ci) * len..][..len];
                    for kk in 0..k {
                        let wk = wd[(co * cin + ci) * k + kk];
                        let (lo, hi) = tap_range(kk, padding, stride, len, lout);
                        if lo >= hi {
                            continue;
                        }
                        if stride == 1 {
                            let off = lo + kk - padding;
                            for (o, xval) in orow[lo..hi].iter_mut().zip(&xrow[off..]) {
                                *o += wk * xval;
                            }
                        } else {
                            for t in lo..hi {
                                orow[t] += wk * xrow[t * stride + kk - padding];
                            }
                        }
                    }
                }
            }
        }
        let t = Tensor::new(vec![b, cout, lout], out)?;
        self.push(
            "conv1d",
            t,
            Op::Conv1d {
                x,
                w,
                stride,
                padding,
            },
        )
    }

    fn map(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let x = self.value(a);
        let data = x.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        self.push(name, t, op)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map("relu", a, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.map("abs", a, f64::abs, Op::Abs(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.map("log", a, f64::ln, Op::Log(a))
    }

    /// `scale * x`.
    pub fn scale(&mut self, a: Var, scale: f64) -> Result<Var> {
        self.map("scale", a, |v| scale * v, Op::Affine(a, scale))
    }

    /// `min(x, ceiling)`; no gradient flows through clamped entries.
    pub fn clamp_max(&mut self, a: Var, ceiling: f64) -> Result<Var> {
        self.map("clamp_max", a, |v| v.min(ceiling), Op::ClampMax(a, ceiling))
    }

    /// Identity forward; backward multiplies the upstream gradient by `-beta`.
    pub fn grl(&mut self, a: Var, beta: f64) -> Result<Var> {
        if !beta.is_finite() {
            return Err(Error::NonFinite("grl beta"));
        }
        let t = self.value(a).clone();
        self.push("grl", t, Op::Grl(a, beta))
    }

    /// `(batch, c, len) -> (batch, c)` mean over the last axis.
    pub fn global_average_pool(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let s = x.shape();
        if s.len() != 3 {
            return Err(shape_err("global_average_pool", format!("{s:?}")));
        }
        let (b, c, len) = (s[0], s[1], s[2]);
        let data = x
            .data()
            .chunks_exact(len)
            .map(|row| row.iter().sum::<f64>() / len as f64)
            .collect();
        let t = Tensor::new(vec![b, c], data)?;
        self.push("global_average_pool", t, Op::GlobalAvgPool(a))
    }

    /// `sign(x) * max(|x| - tau, 0)`. `tau`'s shape must be a leading
    /// prefix of `x`'s shape; each threshold covers the trailing block.
    pub fn soft_threshold(&mut self, x: Var, tau: Var) -> Result<Var> {
        let (xv, tv) = (self.value(x), self.value(tau));
        let (xs, ts) = (xv.shape(), tv.shape());
        if ts.len() > xs.len() || xs[..ts.len()] != *ts {
            return Err(shape_err("soft_threshold", format!("x {xs:?}, tau {ts:?}")));
        }
        let inner = xv.len() / tv.len();
        let mut out = Vec::with_capacity(xv.len());
        for (block, &t) in xv.data().chunks_exact(inner).zip(tv.data()) {
            out.extend(block.iter().map(|&v| {
                let m = v.abs() - t;
                if m > 0.0 {
                    m.copysign(v)
                } else {
                    0.0
                }
            }));
        }
        let t = Tensor::new(xs.to_vec(), out)?;
        self.push("soft_threshold", t, Op::SoftThreshold(x, tau))
    }

    pub fn reduce_mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let m = x.data().iter().sum::<f64>() / x.len() as f64;
        self.push("reduce_mean", Tensor::scalar(m), Op::ReduceMean(a))
    }

    pub fn reduce_sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum::<f64>();
        self.push("reduce_sum", Tensor::scalar(s), Op::ReduceSum(a))
    }

    /// Picks `x[i, classes[i]]` from a `(batch, k)` tensor.
    pub fn gather_class(&mut self, a: Var, classes: &[usize]) -> Result<Var> {
        let x = self.value(a);
        let s = x.shape();
        if s.len() != 2 || s[0] != classes.len() {
            return Err(shape_err(
                "gather_class",
                format!("{s:?} with {} indices", classes.len()),
            ));
        }
        let k = s[1];
        if let Some(&bad) = classes.iter().find(|&&c| c >= k) {
            return Err(Error::ClassOutOfRange {
                index: bad,
                count: k,
            });
        }
        let data = classes
            .iter()
            .enumerate()
            .map(|(i, &c)| x.data()[i * k + c])
            .collect();
        let t = Tensor::new(vec![classes.len()], data)?;
        self.push("gather_class", t, Op::GatherClass(a, classes.to_vec()))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let k = *x.shape().last().unwrap();
        let mut out = Vec::with_capacity(x.len());
        for row in x.data().chunks_exact(k) {
            out.extend(softmax_row(row));
        }
        let t = Tensor::new(x.shape().to_vec(), out)?;
        self.push("softmax", t, Op::Softmax(a))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let k = *x.shape().last().unwrap();
        let mut out = Vec::with_capacity(x.len());
        for row in x.data().chunks_exact(k) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            out.extend(row.iter().map(|v| v - lse));
        }
        let t = Tensor::new(x.shape().to_vec(), out)?;
        self.push("log_softmax", t, Op::LogSoftmax(a))
    }

    /// Reverse sweep from a scalar `loss`. Parameter gradients are added
    /// into `store` (so repeated calls accumulate); all node gradients
    /// are returned.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => store.get_mut(*id).grad.add_assign(&g),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = zip_with(&g, self.value(*b), |gv, bv| gv * bv);
                    let gb = zip_with(&g, self.value(*a), |gv, av| gv * av);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddChannel(x, b) => {
                    let (outer, c, inner) = channel_split(g.shape());
                    let mut gb = vec![0.0; c];
                    for o in 0..outer {
                        for (ch, acc) in gb.iter_mut().enumerate() {
                            let base = (o * c + ch) * inner;
                            *acc += g.data()[base..base + inner].iter().sum::<f64>();
                        }
                    }
                    accumulate(&mut grads, *b, Tensor::from_vec(gb));
                    accumulate(&mut grads, *x, g.clone());
                }
                Op::MulChannel(x, s) => {
                    let xv = self.value(*x);
                    let sv = self.value(*s).data();
                    let (outer, c, inner) = channel_split(g.shape());
                    let mut gs = vec![0.0; c];
                    let mut gx = g.clone();
                    for o in 0..outer {
                        for ch in 0..c {
                            let base = (o * c + ch) * inner;
                            let gblk = &g.data()[base..base + inner];
                            let xblk = &xv.data()[base..base + inner];
                            gs[ch] += gblk.iter().zip(xblk).map(|(a, b)| a * b).sum::<f64>();
                            gx.data_mut()[base..base + inner]
                                .iter_mut()
                                .for_each(|v| *v *= sv[ch]);
                        }
                    }
                    accumulate(&mut grads, *s, Tensor::from_vec(gs));
                    accumulate(&mut grads, *x, gx);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    let (ad, bd, gd) = (av.data(), bv.data(), g.data());
                    let mut ga = vec![0.0; n * k];
                    let mut gb = vec![0.0; k * m];
                    for i in 0..n {
                        let grow = &gd[i * m..(i + 1) * m];
                        for p in 0..k {
                            let brow = &bd[p * m..(p + 1) * m];
                            ga[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                            let a_ip = ad[i * k + p];
                            if a_ip != 0.0 {
                                for (o, gv) in gb[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                    *o += a_ip * gv;
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::new(vec![n, k], ga)?);
                    accumulate(&mut grads, *b, Tensor::new(vec![k, m], gb)?);
                }
                Op::Conv1d {
                    x,
                    w,
                    stride,
                    padding,
                } => {
                    let (gx, gw) = conv1d_backward(self.value(*x), self.value(*w), &g, *stride, *padding);
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *w, gw);
                }
                Op::Relu(a) => {
                    let gx = zip_with(&g, self.value(*a), |gv, xv| if xv > 0.0 { gv } else { 0.0 });
                    accumulate(&mut grads, *a, gx);
                }
                Op::Abs(a) => {
                    let gx = zip_with(&g, self.value(*a), |gv, xv| {
                        if xv > 0.0 {
                            gv
                        } else if xv < 0.0 {
                            -gv
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, *a, gx);
                }
                Op::Sigmoid(a) => {
                    let gx = zip_with(&g, y, |gv, s| gv * s * (1.0 - s));
                    accumulate(&mut grads, *a, gx);
                }
                Op::Log(a) => {
                    let gx = zip_with(&g, self.value(*a), |gv, xv| gv / xv);
                    accumulate(&mut grads, *a, gx);
                }
                Op::Affine(a, s) => {
                    let gx = map_t(&g, |gv| gv * s);
                    accumulate(&mut grads, *a, gx);
                }
                Op::ClampMax(a, c) => {
                    let gx = zip_with(&g, self.value(*a), |gv, xv| if xv <= *c { gv } else { 0.0 });
                    accumulate(&mut grads, *a, gx);
                }
                Op::Grl(a, beta) => {
                    let gx = map_t(&g, |gv| -beta * gv);
                    accumulate(&mut grads, *a, gx);
                }
                Op::GlobalAvgPool(a) => {
                    let xs = self.value(*a).shape().to_vec();
                    let len = xs[2];
                    let mut gx = Vec::with_capacity(xs.iter().product());
                    for &gv in g.data() {
                        let v = gv / len as f64;
                        gx.extend(std::iter::repeat_n(v, len));
                    }
                    accumulate(&mut grads, *a, Tensor::new(xs, gx)?);
                }
                Op::SoftThreshold(x, tau) => {
                    let (xv, tv) = (self.value(*x), self.value(*tau));
                    let inner = xv.len() / tv.len();
                    let mut gx = vec![0.0; xv.len()];
                    let mut gt = vec![0.0; tv.len()];
                    for (j, &t) in tv.data().iter().enumerate() {
                        let r = j * inner..(j + 1) * inner;
                        for ((gxv, &xval), &gv) in gx[r.clone()].iter_mut().zip(&xv.data()[r.clone()]).zip(&g.data()[r]) {
                            if xval.abs() - t > 0.0 {
                                *gxv = gv;
                                gt[j] -= gv * xval.signum();
                            }
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::new(xv.shape().to_vec(), gx)?);
                    accumulate(&mut grads, *tau, Tensor::new(tv.shape().to_vec(), gt)?);
                }
                Op::ReduceMean(a) => {
                    let xv = self.value(*a);
                    let v = g.item() / xv.len() as f64;
                    accumulate(&mut grads, *a, Tensor::filled(xv.shape(), v));
                }
                Op::ReduceSum(a) => {
                    let xv = self.value(*a);
                    accumulate(&mut grads, *a, Tensor::filled(xv.shape(), g.item()));
                }
                Op::GatherClass(a, classes) => {
                    let xv = self.value(*a);
                    let k = xv.shape()[1];
                    let mut gx = Tensor::zeros(xv.shape());
                    for (i, (&c, &gv)) in classes.iter().zip(g.data()).enumerate() {
                        gx.data_mut()[i * k + c] += gv;
                    }
                    accumulate(&mut grads, *a, gx);
                }
                Op::Softmax(a) => {
                    let k = *y.shape().last().unwrap();
                    let mut gx = Vec::with_capacity(y.len());
                    for (yr, gr) in y.data().chunks_exact(k).zip(g.data().chunks_exact(k)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        gx.extend(yr.iter().zip(gr).map(|(p, q)| p * (q - dot)));
                    }
                    accumulate(&mut grads, *a, Tensor::new(y.shape().to_vec(), gx)?);
                }
                Op::LogSoftmax(a) => {
                    let k = *y.shape().last().unwrap();
                    let mut gx = Vec::with_capacity(y.len());
                    for (yr, gr) in y.data().chunks_exact(k).zip(g.data().chunks_exact(k)) {
                        let total: f64 = gr.iter().sum();
                        gx.extend(yr.iter().zip(gr).map(|(ly, q)| q - ly.exp() * total));
                    }
                    accumulate(&mut grads, *a, Tensor::new(y.shape().to_vec(), gx)?);
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

pub(crate) fn softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn zip_with(g: &Tensor, x: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = g.data().iter().zip(x.data()).map(|(&a, &b)| f(a, b)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

fn map_t(g: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = g.data().iter().map(|&a| f(a)).collect();
    Tensor::new(g.shape().to_vec(), data).expect("same shape")
}

fn conv1d_backward(x: &Tensor, w: &Tensor, g: &Tensor, stride: usize, padding: usize) -> (Tensor, Tensor) {
    let (b, cin, len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let lout = g.shape()[2];
    let (xd, wd, gd) = (x.data(), w.data(), g.data());
    let mut gx = vec![0.0; xd.len()];
    let mut gw = vec![0.0; wd.len()];
    for bi in 0..b {
        for co in 0..cout {
            let grow = &gd[(bi * cout + co) * lout..][..lout];
            for ci in 0..cin {
                let xoff = (bi * cin + ci) * len;
                let xrow = &xd[xoff..xoff + len];
                for kk in 0..k {
                    let widx = (co * cin + ci) * k + kk;
                    let wk = wd[widx];
                    let (lo, hi) = tap_range(kk, padding, stride, len, lout);
                    if lo >= hi {
                        continue;
                    }
                    let mut acc = 0.0;
                    if stride == 1 {
                        let off = lo + kk - padding;
                        let gxrow = &mut gx[xoff + off..xoff + off + (hi - lo)];
                        for ((gxv, gv), xv) in gxrow.iter_mut().zip(&grow[lo..hi]).zip(&xrow[off..]) {
                            *gxv += wk * gv;
                            acc += gv * xv;
                        }
                    } else {
                        for t in lo..hi {
                            let idx = t * stride + kk - padding;
                            gx[xoff + idx] += wk * grow[t];
                            acc += grow[t] * xrow[idx];
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    (
        Tensor::new(x.shape().to_vec(), gx).expect("shape"),
        Tensor::new(w.shape().to_vec(), gw).expect("shape"),
    )
}
