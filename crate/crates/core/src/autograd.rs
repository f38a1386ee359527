//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node to a [`Tape`]; [`Tape::backward`] walks the
//! nodes in reverse and accumulates vector-Jacobian products. The primitive set
//! is exactly what the prediction network needs: matrix products, same-padded
//! temporal convolution, 1x1 (pointwise) convolution, elementwise arithmetic,
//! the three activations, and a handful of shape operations. The GRU cell is
//! composed from these primitives.
//!
//! Evaluation is single-threaded and deterministic: identical inputs give
//! bitwise-identical values and gradients.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{split_axis, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SumAll(Var),
    Pointwise {
        x: Var,
        w: Var,
        b: Option<Var>,
        outer: usize,
        cin: usize,
        cout: usize,
        inner: usize,
    },
    Temporal {
        x: Var,
        w: Var,
        n: usize,
        cin: usize,
        cout: usize,
        t: usize,
    },
    Reshape(Var),
    Stack(Vec<Var>),
    Index {
        x: Var,
        outer: usize,
        dim: usize,
        inner: usize,
        i: usize,
    },
    Broadcast { x: Var, outer: usize, inner: usize },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation graph.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`. Always present for leaves
    /// created with `requires_grad`; leaves unreachable from the loss get zeros.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

/// Weights of one GRU cell, as tape handles.
///
/// `w_*` map the input (`C_h x C_x`), `u_*` map the hidden state (`C_h x C_h`),
/// `b_*` are biases of length `C_h`.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-v))
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// `a[m x k] * b[k x n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let row = &bv[p * n..(p + 1) * n];
                for (o, &y) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *o += x * y;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::MatMul { a, b, m, k, n }, rg))
    }

    /// Matrix-vector product `w[r x c] * x[c] -> [r]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let c = self.value(x).len();
        let col = self.reshape(x, &[c, 1])?;
        let y = self.matmul(w, col)?;
        let r = self.shape(w)[0];
        self.reshape(y, &[r])
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, s), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(v, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(libm::tanh);
        let rg = self.rg(a);
        self.push(v, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(a);
        self.push(v, Op::Relu(a), rg)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), rg)
    }

    /// 1x1 convolution along `axis`.
    ///
    /// `x` has shape `[.., C_in, ..]` with `C_in` at `axis`, `w` is `C_out x C_in`
    /// and the optional bias has length `C_out`. The result replaces `C_in` with
    /// `C_out`; every other position is mapped independently.
    pub fn pointwise_conv(&mut self, x: Var, w: Var, b: Option<Var>, axis: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if axis >= xs.len() || ws.len() != 2 || ws[1] != xs[axis] {
            return Err(Error::shape("pointwise_conv", &xs, &ws));
        }
        let (outer, cin, inner) = split_axis(&xs, axis);
        let cout = ws[0];
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(Error::shape("pointwise_conv bias", self.shape(b), &[cout]));
            }
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = b.map(|b| self.value(b).data());
        let mut out = vec![0.0; outer * cout * inner];
        for o in 0..outer {
            for co in 0..cout {
                let dst = &mut out[(o * cout + co) * inner..(o * cout + co + 1) * inner];
                if let Some(bv) = bv {
                    dst.iter_mut().for_each(|d| *d = bv[co]);
                }
                for ci in 0..cin {
                    let wgt = wv[co * cin + ci];
                    let src = &xv[(o * cin + ci) * inner..(o * cin + ci + 1) * inner];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += wgt * s;
                    }
                }
            }
        }
        let mut shape = xs;
        shape[axis] = cout;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::Pointwise {
                x,
                w,
                b,
                outer,
                cin,
                cout,
                inner,
            },
            rg,
        ))
    }

    /// Convolution over the last (time) axis with a width-3 kernel and one
    /// frame of zero padding on each side.
    ///
    /// `x` is `N x C_in x T`, `w` is `C_out x C_in x 3`; output is `N x C_out x T`.
    /// Agents (the leading axis) never mix.
    pub fn temporal_conv(&mut self, x: Var, w: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 3 || ws[2] != 3 || ws[1] != xs[1] || xs[2] == 0 {
            return Err(Error::shape("temporal_conv", &xs, &ws));
        }
        let (n, cin, t) = (xs[0], xs[1], xs[2]);
        let cout = ws[0];
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![0.0; n * cout * t];
        for a in 0..n {
            for co in 0..cout {
                let dst = &mut out[(a * cout + co) * t..(a * cout + co + 1) * t];
                for ci in 0..cin {
                    let src = &xv[(a * cin + ci) * t..(a * cin + ci + 1) * t];
                    let k = &wv[(co * cin + ci) * 3..(co * cin + ci) * 3 + 3];
                    for (tt, d) in dst.iter_mut().enumerate() {
                        // taps at t-1, t, t+1
                        if tt > 0 {
                            *d += k[0] * src[tt - 1];
                        }
                        *d += k[1] * src[tt];
                        if tt + 1 < t {
                            *d += k[2] * src[tt + 1];
                        }
                    }
                }
            }
        }
        let rg = self.rg(x) || self.rg(w);
        let value = Tensor::new(vec![n, cout, t], out)?;
        Ok(self.push(value, Op::Temporal { x, w, n, cin, cout, t }, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshaped(shape)?;
        let rg = self.rg(a);
        Ok(self.push(v, Op::Reshape(a), rg))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = match parts.first() {
            Some(&p) => self.shape(p).to_vec(),
            None => return Err(Error::shape("stack", &[], &[])),
        };
        let mut data = Vec::with_capacity(parts.len() * first.iter().product::<usize>());
        for &p in parts {
            if self.shape(p) != first.as_slice() {
                return Err(Error::shape("stack", &first, self.shape(p)));
            }
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&first);
        let rg = parts.iter().any(|&p| self.rg(p));
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Stack(parts.to_vec()), rg))
    }

    /// Selects index `i` along `axis`, removing that axis.
    pub fn index_axis(&mut self, x: Var, axis: usize, i: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() || i >= xs[axis] {
            return Err(Error::shape("index_axis", &xs, &[axis, i]));
        }
        let (outer, dim, inner) = split_axis(&xs, axis);
        let xv = self.value(x).data();
        let mut data = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = (o * dim + i) * inner;
            data.extend_from_slice(&xv[base..base + inner]);
        }
        let mut shape = xs;
        shape.remove(axis);
        let rg = self.rg(x);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(
            value,
            Op::Index {
                x,
                outer,
                dim,
                inner,
                i,
            },
            rg,
        ))
    }

    /// Replicates a vector `x[D]` to `[outer, D, inner]`.
    pub fn broadcast(&mut self, x: Var, outer: usize, inner: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 1 {
            return Err(Error::shape("broadcast", &xs, &[outer, inner]));
        }
        let d = xs[0];
        let xv = self.value(x).data();
        let mut data = Vec::with_capacity(outer * d * inner);
        for _ in 0..outer {
            for &v in xv {
                data.extend(core::iter::repeat_n(v, inner));
            }
        }
        let rg = self.rg(x);
        let value = Tensor::new(vec![outer, d, inner], data)?;
        Ok(self.push(value, Op::Broadcast { x, outer, inner }, rg))
    }

    /// One GRU step:
    ///
    /// ```text
    /// z  = sigmoid(W_z x + U_z h + b_z)
    /// r  = sigmoid(W_r x + U_r h + b_r)
    /// h~ = tanh(W_h x + U_h (r * h) + b_h)
    /// h' = (1 - z) * h + z * h~
    /// ```
    pub fn gru_cell(&mut self, x: Var, h: Var, p: &GruVars) -> Result<Var> {
        let ch = self.shape(p.u_z)[0];
        if self.shape(h) != [ch] {
            return Err(Error::shape("gru_cell hidden", self.shape(h), &[ch]));
        }
        let gate = |tape: &mut Tape, w: Var, u: Var, b: Var, hin: Var| -> Result<Var> {
            let wx = tape.matvec(w, x)?;
            let uh = tape.matvec(u, hin)?;
            let s = tape.add(wx, uh)?;
            tape.add(s, b)
        };
        let z_pre = gate(self, p.w_z, p.u_z, p.b_z, h)?;
        let z = self.sigmoid(z_pre);
        let r_pre = gate(self, p.w_r, p.u_r, p.b_r, h)?;
        let r = self.sigmoid(r_pre);
        let rh = self.mul(r, h)?;
        let c_pre = gate(self, p.w_h, p.u_h, p.b_h, rh)?;
        let cand = self.tanh(c_pre);
        // h + z * (h~ - h)
        let diff = self.sub(cand, h)?;
        let step = self.mul(z, diff)?;
        self.add(h, step)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", self.shape(loss), &[]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(&node.op, &g, &node.value, &mut grads);
            grads[idx] = Some(g);
        }

        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, node.requires_grad, g) {
                (Op::Leaf, true, Some(g)) => Some(Tensor::new(node.value.shape().to_vec(), g).expect("grad shape")),
                (Op::Leaf, true, None) => Some(Tensor::zeros(node.value.shape())),
                (_, true, Some(g)) => Some(Tensor::new(node.value.shape().to_vec(), g).expect("grad shape")),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, g: &[f64], out: &Tensor, grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        match *op {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                let (av, bv) = (val(a), val(b));
                acc(a, &mut |ga| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[i * n + j] * bv[p * n + j];
                            }
                            ga[i * k + p] += s;
                        }
                    }
                });
                acc(b, &mut |gb| {
                    for i in 0..m {
                        for p in 0..k {
                            let x = av[i * k + p];
                            for j in 0..n {
                                gb[p * n + j] += x * g[i * n + j];
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(a, &mut |ga| ga.iter_mut().zip(g).for_each(|(d, &s)| *d += s));
                acc(b, &mut |gb| gb.iter_mut().zip(g).for_each(|(d, &s)| *d += s));
            }
            Op::Sub(a, b) => {
                acc(a, &mut |ga| ga.iter_mut().zip(g).for_each(|(d, &s)| *d += s));
                acc(b, &mut |gb| gb.iter_mut().zip(g).for_each(|(d, &s)| *d -= s));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(a), val(b));
                acc(a, &mut |ga| {
                    for ((d, &s), &y) in ga.iter_mut().zip(g).zip(bv) {
                        *d += s * y;
                    }
                });
                acc(b, &mut |gb| {
                    for ((d, &s), &x) in gb.iter_mut().zip(g).zip(av) {
                        *d += s * x;
                    }
                });
            }
            Op::Scale(a, s) => acc(a, &mut |ga| ga.iter_mut().zip(g).for_each(|(d, &v)| *d += s * v)),
            Op::Sigmoid(a) => {
                let y = out.data();
                acc(a, &mut |ga| {
                    for ((d, &s), &y) in ga.iter_mut().zip(g).zip(y) {
                        *d += s * y * (1.0 - y);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = out.data();
                acc(a, &mut |ga| {
                    for ((d, &s), &y) in ga.iter_mut().zip(g).zip(y) {
                        *d += s * (1.0 - y * y);
                    }
                });
            }
            Op::Relu(a) => {
                let x = val(a);
                acc(a, &mut |ga| {
                    for ((d, &s), &x) in ga.iter_mut().zip(g).zip(x) {
                        if x > 0.0 {
                            *d += s;
                        }
                    }
                });
            }
            Op::SumAll(a) => acc(a, &mut |ga| ga.iter_mut().for_each(|d| *d += g[0])),
            Op::Pointwise {
                x,
                w,
                b,
                outer,
                cin,
                cout,
                inner,
            } => {
                let (xv, wv) = (val(x), val(w));
                acc(x, &mut |gx| {
                    for o in 0..outer {
                        for co in 0..cout {
                            let src = &g[(o * cout + co) * inner..(o * cout + co + 1) * inner];
                            for ci in 0..cin {
                                let wgt = wv[co * cin + ci];
                                let dst = &mut gx[(o * cin + ci) * inner..(o * cin + ci + 1) * inner];
                                for (d, &s) in dst.iter_mut().zip(src) {
                                    *d += wgt * s;
                                }
                            }
                        }
                    }
                });
                acc(w, &mut |gw| {
                    for o in 0..outer {
                        for co in 0..cout {
                            let go = &g[(o * cout + co) * inner..(o * cout + co + 1) * inner];
                            for ci in 0..cin {
                                let xo = &xv[(o * cin + ci) * inner..(o * cin + ci + 1) * inner];
                                gw[co * cin + ci] += go.iter().zip(xo).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                });
                if let Some(b) = b {
                    acc(b, &mut |gb| {
                        for o in 0..outer {
                            for (co, d) in gb.iter_mut().enumerate() {
                                *d += g[(o * cout + co) * inner..(o * cout + co + 1) * inner].iter().sum::<f64>();
                            }
                        }
                    });
                }
            }
            Op::Temporal { x, w, n, cin, cout, t } => {
                let (xv, wv) = (val(x), val(w));
                acc(x, &mut |gx| {
                    for a in 0..n {
                        for co in 0..cout {
                            let go = &g[(a * cout + co) * t..(a * cout + co + 1) * t];
                            for ci in 0..cin {
                                let k = &wv[(co * cin + ci) * 3..(co * cin + ci) * 3 + 3];
                                let dst = &mut gx[(a * cin + ci) * t..(a * cin + ci + 1) * t];
                                for (tt, &s) in go.iter().enumerate() {
                                    if tt > 0 {
                                        dst[tt - 1] += k[0] * s;
                                    }
                                    dst[tt] += k[1] * s;
                                    if tt + 1 < t {
                                        dst[tt + 1] += k[2] * s;
                                    }
                                }
                            }
                        }
                    }
                });
                acc(w, &mut |gw| {
                    for a in 0..n {
                        for co in 0..cout {
                            let go = &g[(a * cout + co) * t..(a * cout + co + 1) * t];
                            for ci in 0..cin {
                                let src = &xv[(a * cin + ci) * t..(a * cin + ci + 1) * t];
                                let k = &mut gw[(co * cin + ci) * 3..(co * cin + ci) * 3 + 3];
                                for (tt, &s) in go.iter().enumerate() {
                                    if tt > 0 {
                                        k[0] += s * src[tt - 1];
                                    }
                                    k[1] += s * src[tt];
                                    if tt + 1 < t {
                                        k[2] += s * src[tt + 1];
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::Reshape(a) => acc(a, &mut |ga| ga.iter_mut().zip(g).for_each(|(d, &s)| *d += s)),
            Op::Stack(ref parts) => {
                let chunk = g.len() / parts.len().max(1);
                for (p, &v) in parts.iter().enumerate() {
                    let src = &g[p * chunk..(p + 1) * chunk];
                    acc(v, &mut |gv| gv.iter_mut().zip(src).for_each(|(d, &s)| *d += s));
                }
            }
            Op::Index {
                x,
                outer,
                dim,
                inner,
                i,
            } => acc(x, &mut |gx| {
                for o in 0..outer {
                    let base = (o * dim + i) * inner;
                    let src = &g[o * inner..(o + 1) * inner];
                    gx[base..base + inner].iter_mut().zip(src).for_each(|(d, &s)| *d += s);
                }
            }),
            Op::Broadcast { x, outer, inner } => acc(x, &mut |gx| {
                let d = gx.len();
                for o in 0..outer {
                    for (c, dst) in gx.iter_mut().enumerate() {
                        let base = (o * d + c) * inner;
                        *dst += g[base..base + inner].iter().sum::<f64>();
                    }
                }
            }),
        }
    }
}
