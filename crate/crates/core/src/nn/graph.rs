//! Reverse-mode differentiation over a flat tape of tensor operations.
//!
//! A [`Graph`] is built once per forward pass. Every op stores its output
//! value; `backward` walks the tape in reverse and accumulates gradients.
//! Loss functions live outside the tape: they return a value and the
//! gradient with respect to their input, which seeds `backward`.

use super::params::{ParamId, ParamSet};
use super::tensor::{matmul, MatRef, Scalar, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    Conv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    MaxPool2 { x: Var, argmax: Vec<u32> },
    Upsample2(Var),
    Concat(Var, Var),
    Add(Var, Var),
    Softmax(Var),
    Reshape(Var),
    InstanceNorm { x: Var, inv_std: Vec<T> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients for every node of a graph after one backward pass.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(usize, ParamId)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn of(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    /// Gradients keyed by parameter, in the order parameters were first
    /// bound to the graph. A parameter bound several times (a model applied
    /// to two inputs) gets the sum of its gradients. Parameters that received
    /// no gradient are skipped.
    pub fn param_grads(&self) -> Vec<(ParamId, Tensor<T>)> {
        let mut out: Vec<(ParamId, Tensor<T>)> = Vec::new();
        for &(node, id) in self.params.iter().rev() {
            let Some(g) = self.grads[node].as_ref() else { continue };
            match out.iter_mut().find(|(seen, _)| *seen == id) {
                Some((_, acc)) => acc.add_assign(g),
                None => out.push((id, g.clone())),
            }
        }
        out
    }
}

fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    assert!(size + 2 * pad >= k, "kernel larger than padded input");
    (size + 2 * pad - k) / stride + 1
}

/// Unfolds one `(c, h, w)` image into a `(c*k*k, ho*wo)` column matrix.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    cols: &mut [T],
) {
    let ho = conv_out(h, k, stride, pad);
    let wo = conv_out(w, k, stride, pad);
    let l = ho * wo;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut cols[row * l..(row + 1) * l];
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    let line = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in line.iter_mut().enumerate() {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        *d = if ix < 0 || ix >= w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into an image.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    dx: &mut [T],
) {
    let ho = conv_out(h, k, stride, pad);
    let wo = conv_out(w, k, stride, pad);
    let l = ho * wo;
    for ci in 0..c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &cols[row * l..(row + 1) * l];
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            line[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

const NORM_EPS: f64 = 1e-5;

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn take_value(mut self, v: Var) -> Tensor<T> {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::zeros([0, 0, 0, 0]))
    }

    /// A constant input. Gradients are not propagated into it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// An input whose gradient is wanted (used by gradient checks and by the
    /// generator step, which backpropagates through the discriminator).
    pub fn input_with_grad(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, params: &ParamSet<T>, id: ParamId) -> Var {
        self.push(params.get(id).clone(), Op::Param(id), true)
    }

    /// A parameter used as a constant: no gradient is accumulated for it.
    pub fn frozen_param(&mut self, params: &ParamSet<T>, id: ParamId) -> Var {
        self.push(params.get(id).clone(), Op::Leaf, false)
    }

    /// 2-D convolution. `w` is `(out, in, k, k)` and `b` is `(1, out, 1, 1)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        let bv = self.value(b);
        let [n, cin, h, wd] = xv.shape();
        let [cout, wcin, k, k2] = wv.shape();
        assert_eq!(cin, wcin, "conv2d: input has {cin} channels, weight expects {wcin}");
        assert_eq!(k, k2, "conv2d: square kernels only");
        assert_eq!(bv.len(), cout);
        let ho = conv_out(h, k, stride, pad);
        let wo = conv_out(wd, k, stride, pad);
        let l = ho * wo;
        let kk = cin * k * k;
        let mut out = Tensor::zeros([n, cout, ho, wo]);
        let mut cols = vec![T::zero(); kk * l];
        for i in 0..n {
            im2col(xv.item(i), cin, h, wd, k, stride, pad, &mut cols);
            let y = out.item_mut(i);
            for (co, &bias) in bv.data().iter().enumerate() {
                y[co * l..(co + 1) * l].fill(bias);
            }
            matmul(MatRef::new(wv.data(), cout, kk), MatRef::new(&cols, kk, l), T::one(), y);
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        self.push(out, Op::Conv2d { x, w, b, stride, pad }, rg)
    }

    /// Fully connected layer over the flattened item. `w` is `(out, in, 1, 1)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        let bv = self.value(b);
        let n = xv.n();
        let f = xv.item_len();
        let o = wv.n();
        assert_eq!(wv.item_len(), f, "linear: weight expects {} inputs, got {f}", wv.item_len());
        assert_eq!(bv.len(), o);
        let mut out = Tensor::zeros([n, o, 1, 1]);
        for i in 0..n {
            out.item_mut(i).copy_from_slice(bv.data());
        }
        matmul(
            MatRef::new(xv.data(), n, f),
            MatRef::new(wv.data(), o, f).t(),
            T::one(),
            out.data_mut(),
        );
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        self.push(out, Op::Linear { x, w, b }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.rg(x);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = T::lit(slope);
        let out = self.value(x).map(|v| if v > T::zero() { v } else { v * s });
        let rg = self.rg(x);
        self.push(out, Op::LeakyRelu(x, slope), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        let rg = self.rg(x);
        self.push(out, Op::Sigmoid(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        let rg = self.rg(x);
        self.push(out, Op::Tanh(x), rg)
    }

    /// 2x2 max pooling with stride 2. Ties go to the first element in
    /// row-major order.
    pub fn max_pool2(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let [n, c, h, w] = xv.shape();
        assert!(h % 2 == 0 && w % 2 == 0, "max_pool2 needs even spatial dims, got {h}x{w}");
        let (ho, wo) = (h / 2, w / 2);
        let mut out = Tensor::zeros([n, c, ho, wo]);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        let src = xv.data();
        let dst = out.data_mut();
        let mut o = 0;
        for nc in 0..n * c {
            let base = nc * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    dst[o] = src[best];
                    argmax.push(best as u32);
                    o += 1;
                }
            }
        }
        let rg = self.rg(x);
        self.push(out, Op::MaxPool2 { x, argmax }, rg)
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let [n, c, h, w] = xv.shape();
        let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
        let src = xv.data();
        let dst = out.data_mut();
        for nc in 0..n * c {
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    dst[nc * 4 * h * w + y * 2 * w + xx] = src[nc * h * w + (y / 2) * w + xx / 2];
                }
            }
        }
        let rg = self.rg(x);
        self.push(out, Op::Upsample2(x), rg)
    }

    /// Channel-wise concatenation.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        let [n, ca, h, w] = av.shape();
        let [nb, cb, hb, wb] = bv.shape();
        assert_eq!((n, h, w), (nb, hb, wb), "concat: batch/spatial dims differ");
        let mut out = Tensor::zeros([n, ca + cb, h, w]);
        for i in 0..n {
            let dst = out.item_mut(i);
            dst[..ca * h * w].copy_from_slice(av.item(i));
            dst[ca * h * w..].copy_from_slice(bv.item(i));
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Concat(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Add(a, b), rg)
    }

    /// Softmax across channels at every pixel.
    pub fn softmax(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let [n, c, h, w] = xv.shape();
        let hw = h * w;
        let mut out = Tensor::zeros([n, c, h, w]);
        for i in 0..n {
            let src = xv.item(i);
            let dst = out.item_mut(i);
            for p in 0..hw {
                let mut m = T::neg_infinity();
                for ch in 0..c {
                    m = m.max(src[ch * hw + p]);
                }
                let mut s = T::zero();
                for ch in 0..c {
                    let e = (src[ch * hw + p] - m).exp();
                    dst[ch * hw + p] = e;
                    s += e;
                }
                for ch in 0..c {
                    dst[ch * hw + p] = dst[ch * hw + p] / s;
                }
            }
        }
        let rg = self.rg(x);
        self.push(out, Op::Softmax(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: [usize; 4]) -> Var {
        let out = self.value(x).clone().reshape(shape);
        let rg = self.rg(x);
        self.push(out, Op::Reshape(x), rg)
    }

    /// Per-item, per-channel normalization to zero mean and unit variance.
    pub fn instance_norm(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let [n, c, h, w] = xv.shape();
        let hw = h * w;
        let mut out = Tensor::zeros([n, c, h, w]);
        let mut inv_std = Vec::with_capacity(n * c);
        let src = xv.data();
        let dst = out.data_mut();
        let denom = T::lit(hw as f64);
        for nc in 0..n * c {
            let plane = &src[nc * hw..(nc + 1) * hw];
            let mean = plane.iter().copied().sum::<T>() / denom;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / denom;
            let is = T::one() / (var + T::lit(NORM_EPS)).sqrt();
            for (d, &v) in dst[nc * hw..(nc + 1) * hw].iter_mut().zip(plane) {
                *d = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let rg = self.rg(x);
        self.push(out, Op::InstanceNorm { x, inv_std }, rg)
    }

    /// Which linear piece every piecewise-linear op is on: the sign of each
    /// ReLU input and the winning index of each max-pool window. Two forward
    /// passes with equal signatures lie on the same smooth region.
    pub fn piece_signature(&self) -> Vec<u32> {
        let mut sig = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) | Op::LeakyRelu(x, _) => {
                    sig.extend(self.value(*x).data().iter().map(|&v| (v > T::zero()) as u32));
                }
                Op::MaxPool2 { argmax, .. } => sig.extend_from_slice(argmax),
                _ => {}
            }
        }
        sig
    }

    /// Backpropagates `seed` (the gradient of some scalar with respect to
    /// `root`) through the tape.
    pub fn backward(&self, root: Var, seed: Tensor<T>) -> Gradients<T> {
        self.backward_multi(vec![(root, seed)])
    }

    /// Backpropagates several seeds at once; gradients from every seed are
    /// summed, as for a loss that is a sum of terms on different nodes.
    pub fn backward_multi(&self, seeds: Vec<(Var, Tensor<T>)>) -> Gradients<T> {
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut last = 0;
        for (v, seed) in seeds {
            assert_eq!(self.value(v).shape(), seed.shape(), "seed shape must match its node");
            last = last.max(v.0);
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&seed),
                slot @ None => *slot = Some(seed),
            }
        }
        let mut params = Vec::new();
        for idx in (0..=last).rev() {
            let node = &self.nodes[idx];
            if let Op::Param(id) = node.op {
                params.push((idx, id));
                continue;
            }
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else { continue };
            self.backward_node(node, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        params.reverse();
        Gradients { grads, params }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backward_node(&self, node: &Node<T>, dy: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            &Op::Conv2d { x, w, b, stride, pad } => {
                let xv = self.value(x);
                let wv = self.value(w);
                let [n, cin, h, wd] = xv.shape();
                let [cout, _, k, _] = wv.shape();
                let l = y.h() * y.w();
                let kk = cin * k * k;
                let mut dw = Tensor::zeros(wv.shape());
                let mut db = Tensor::zeros([1, cout, 1, 1]);
                let mut dx = self.rg(x).then(|| Tensor::zeros(xv.shape()));
                let mut cols = vec![T::zero(); kk * l];
                let mut dcols = vec![T::zero(); kk * l];
                for i in 0..n {
                    let dyi = dy.item(i);
                    for co in 0..cout {
                        db.data_mut()[co] += dyi[co * l..(co + 1) * l].iter().copied().sum::<T>();
                    }
                    if self.rg(w) {
                        im2col(xv.item(i), cin, h, wd, k, stride, pad, &mut cols);
                        matmul(
                            MatRef::new(dyi, cout, l),
                            MatRef::new(&cols, kk, l).t(),
                            T::one(),
                            dw.data_mut(),
                        );
                    }
                    if let Some(dx) = dx.as_mut() {
                        matmul(
                            MatRef::new(wv.data(), cout, kk).t(),
                            MatRef::new(dyi, cout, l),
                            T::zero(),
                            &mut dcols,
                        );
                        col2im(&dcols, cin, h, wd, k, stride, pad, dx.item_mut(i));
                    }
                }
                self.accumulate(grads, w, dw);
                self.accumulate(grads, b, db);
                if let Some(dx) = dx {
                    self.accumulate(grads, x, dx);
                }
            }
            &Op::Linear { x, w, b } => {
                let xv = self.value(x);
                let wv = self.value(w);
                let n = xv.n();
                let f = xv.item_len();
                let o = wv.n();
                let mut dw = Tensor::zeros(wv.shape());
                matmul(
                    MatRef::new(dy.data(), n, o).t(),
                    MatRef::new(xv.data(), n, f),
                    T::zero(),
                    dw.data_mut(),
                );
                let mut db = Tensor::zeros([1, o, 1, 1]);
                for i in 0..n {
                    for (d, &g) in db.data_mut().iter_mut().zip(dy.item(i)) {
                        *d += g;
                    }
                }
                if self.rg(x) {
                    let mut dx = Tensor::zeros(xv.shape());
                    matmul(
                        MatRef::new(dy.data(), n, o),
                        MatRef::new(wv.data(), o, f),
                        T::zero(),
                        dx.data_mut(),
                    );
                    self.accumulate(grads, x, dx);
                }
                self.accumulate(grads, w, dw);
                self.accumulate(grads, b, db);
            }
            &Op::Relu(x) => {
                let xv = self.value(x);
                let mut dx = dy.clone();
                for (d, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                    if v <= T::zero() {
                        *d = T::zero();
                    }
                }
                self.accumulate(grads, x, dx);
            }
            &Op::LeakyRelu(x, slope) => {
                let s = T::lit(slope);
                let xv = self.value(x);
                let mut dx = dy.clone();
                for (d, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                    if v <= T::zero() {
                        *d *= s;
                    }
                }
                self.accumulate(grads, x, dx);
            }
            &Op::Sigmoid(x) => {
                let mut dx = dy.clone();
                for (d, &s) in dx.data_mut().iter_mut().zip(y.data()) {
                    *d *= s * (T::one() - s);
                }
                self.accumulate(grads, x, dx);
            }
            &Op::Tanh(x) => {
                let mut dx = dy.clone();
                for (d, &t) in dx.data_mut().iter_mut().zip(y.data()) {
                    *d *= T::one() - t * t;
                }
                self.accumulate(grads, x, dx);
            }
            Op::MaxPool2 { x, argmax } => {
                let mut dx = Tensor::zeros(self.value(*x).shape());
                let dxd = dx.data_mut();
                for (&src, &g) in argmax.iter().zip(dy.data()) {
                    dxd[src as usize] += g;
                }
                self.accumulate(grads, *x, dx);
            }
            &Op::Upsample2(x) => {
                let [n, c, h, w] = self.value(x).shape();
                let mut dx = Tensor::zeros([n, c, h, w]);
                let dxd = dx.data_mut();
                let dyd = dy.data();
                for nc in 0..n * c {
                    for yy in 0..2 * h {
                        for xx in 0..2 * w {
                            dxd[nc * h * w + (yy / 2) * w + xx / 2] +=
                                dyd[nc * 4 * h * w + yy * 2 * w + xx];
                        }
                    }
                }
                self.accumulate(grads, x, dx);
            }
            &Op::Concat(a, b) => {
                let [n, ca, h, w] = self.value(a).shape();
                let cb = self.value(b).c();
                let mut da = Tensor::zeros([n, ca, h, w]);
                let mut dbt = Tensor::zeros([n, cb, h, w]);
                for i in 0..n {
                    let src = dy.item(i);
                    da.item_mut(i).copy_from_slice(&src[..ca * h * w]);
                    dbt.item_mut(i).copy_from_slice(&src[ca * h * w..]);
                }
                self.accumulate(grads, a, da);
                self.accumulate(grads, b, dbt);
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, dy.clone());
                self.accumulate(grads, b, dy.clone());
            }
            &Op::Softmax(x) => {
                let [n, c, h, w] = y.shape();
                let hw = h * w;
                let mut dx = Tensor::zeros([n, c, h, w]);
                for i in 0..n {
                    let yi = y.item(i);
                    let gi = dy.item(i);
                    let di = dx.item_mut(i);
                    for p in 0..hw {
                        let mut dot = T::zero();
                        for ch in 0..c {
                            dot += gi[ch * hw + p] * yi[ch * hw + p];
                        }
                        for ch in 0..c {
                            di[ch * hw + p] = yi[ch * hw + p] * (gi[ch * hw + p] - dot);
                        }
                    }
                }
                self.accumulate(grads, x, dx);
            }
            &Op::Reshape(x) => {
                let dx = dy.clone().reshape(self.value(x).shape());
                self.accumulate(grads, x, dx);
            }
            Op::InstanceNorm { x, inv_std } => {
                let [n, c, h, w] = y.shape();
                let hw = h * w;
                let denom = T::lit(hw as f64);
                let mut dx = Tensor::zeros([n, c, h, w]);
                let (yd, gd) = (y.data(), dy.data());
                let dxd = dx.data_mut();
                for nc in 0..n * c {
                    let r = nc * hw..(nc + 1) * hw;
                    let g_mean = gd[r.clone()].iter().copied().sum::<T>() / denom;
                    let gy_mean =
                        gd[r.clone()].iter().zip(&yd[r.clone()]).map(|(&g, &v)| g * v).sum::<T>()
                            / denom;
                    for p in r {
                        dxd[p] = inv_std[nc] * (gd[p] - g_mean - yd[p] * gy_mean);
                    }
                }
                self.accumulate(grads, *x, dx);
            }
        }
    }
}
