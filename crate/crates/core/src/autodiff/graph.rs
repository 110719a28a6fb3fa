use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, nc_inner, shape4, ConvSpec};
use super::{Array, Scalar};
use crate::error::{invalid, Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sqrt(Var),
    Abs(Var),
    LeakyRelu(Var, f64),
    Clamp(Var, f64, f64),
    Sigmoid(Var),
    Softplus(Var),
    AddBias(Var, Var),
    SumToChannels(Var),
    BroadcastChannels(Var),
    ChannelSum(Var),
    ChannelRepeat(Var),
    SumAll(Var),
    ExpandAll(Var),
    SumPerSample(Var),
    ExpandPerSample(Var),
    Conv(Var, Var, ConvSpec),
    ConvBwdData(Var, Var, ConvSpec),
    ConvBwdFilter(Var, Var, ConvSpec),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat(Vec<Var>),
    SliceChannels(Var, usize),
    PadChannels(Var, usize),
    Crop(Var, Vec<(usize, usize)>),
    Uncrop(Var, Vec<(usize, usize)>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Sqrt(..) => "sqrt",
            Op::Abs(..) => "abs",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Clamp(..) => "clamp",
            Op::Sigmoid(..) => "sigmoid",
            Op::Softplus(..) => "softplus",
            Op::AddBias(..) => "add_bias",
            Op::SumToChannels(..) => "sum_to_channels",
            Op::BroadcastChannels(..) => "broadcast_channels",
            Op::ChannelSum(..) => "channel_sum",
            Op::ChannelRepeat(..) => "channel_repeat",
            Op::SumAll(..) => "sum",
            Op::ExpandAll(..) => "expand",
            Op::SumPerSample(..) => "sum_per_sample",
            Op::ExpandPerSample(..) => "expand_per_sample",
            Op::Conv(..) => "conv2d",
            Op::ConvBwdData(..) => "conv2d_transpose",
            Op::ConvBwdFilter(..) => "conv2d_bwd_filter",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::Concat(..) => "concat",
            Op::SliceChannels(..) => "slice_channels",
            Op::PadChannels(..) => "pad_channels",
            Op::Crop(..) => "crop",
            Op::Uncrop(..) => "uncrop",
        }
    }

    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::AddBias(a, b)
            | Op::Conv(a, b, _)
            | Op::ConvBwdData(a, b, _)
            | Op::ConvBwdFilter(a, b, _)
            | Op::MatMul(a, b) => vec![*a, *b],
            Op::Concat(parts) => parts.clone(),
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Sqrt(a)
            | Op::Abs(a)
            | Op::LeakyRelu(a, _)
            | Op::Clamp(a, _, _)
            | Op::Sigmoid(a)
            | Op::Softplus(a)
            | Op::SumToChannels(a)
            | Op::BroadcastChannels(a)
            | Op::ChannelSum(a)
            | Op::ChannelRepeat(a)
            | Op::SumAll(a)
            | Op::ExpandAll(a)
            | Op::SumPerSample(a)
            | Op::ExpandPerSample(a)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::SliceChannels(a, _)
            | Op::PadChannels(a, _)
            | Op::Crop(a, _)
            | Op::Uncrop(a, _) => vec![*a],
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Array<T>,
    op: Op,
    requires_grad: bool,
}

/// Tape of nodes in creation (= topological) order.
#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// First-order gradients returned by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    entries: Vec<(Var, Array<T>)>,
}

impl<T> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Array<T>> {
        self.entries.iter().find(|(k, _)| *k == v).map(|(_, a)| a)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Var, Array<T>)> {
        self.entries.iter()
    }
}

fn same_shape(ctx: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Shape { context: ctx, left: a.to_vec(), right: b.to_vec() })
    }
}

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

    fn push(&mut self, value: Array<T>, op: Op) -> Var {
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Leaf node. `requires_grad` marks trainable parameters and inputs that
    /// gradients are requested for.
    pub fn leaf(&mut self, value: Array<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Array<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Array<T>) -> Var {
        self.leaf(value, false)
    }

    /// Constant copy of `v`'s current value, cut off from the graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Array<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Value of a one-element tensor.
    pub fn scalar_value(&self, v: Var) -> T {
        self.value(v).data()[0]
    }

    /// Reports the first node holding a NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        match self.nodes.iter().position(|n| !n.value.all_finite()) {
            Some(i) => Err(Error::NonFinite { node: i, op: self.nodes[i].op.name() }),
            None => Ok(()),
        }
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(T) -> T) -> Var {
        let value = self.value(a).map(f);
        self.push(value, op)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(T, T) -> T) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(op.name(), va.shape(), vb.shape())?;
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Array::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let k = T::of(c);
        self.unary(a, Op::Scale(a, c), move |x| x * k)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let k = T::of(c);
        self.unary(a, Op::AddScalar(a), move |x| x + k)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), |x| x.sqrt())
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Op::Abs(a), |x| x.abs())
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let s = T::of(slope);
        self.unary(a, Op::LeakyRelu(a, slope), move |x| if x > T::zero() { x } else { x * s })
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let (l, h) = (T::of(lo), T::of(hi));
        self.unary(a, Op::Clamp(a, lo, hi), move |x| x.max(l).min(h))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus(a), softplus)
    }

    /// Adds `b[c]` to every element of channel `c` of `x[N, C, ...]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (n, c, inner) = nc_inner(self.shape(x))?;
        same_shape("add_bias", self.shape(b), &[c])?;
        let mut value = self.value(x).clone();
        let bias = self.value(b).data().to_vec();
        for bi in 0..n {
            for (ci, bv) in bias.iter().enumerate() {
                let base = (bi * c + ci) * inner;
                for v in &mut value.data_mut()[base..base + inner] {
                    *v += *bv;
                }
            }
        }
        Ok(self.push(value, Op::AddBias(x, b)))
    }

    /// Sums `x[N, C, ...]` down to `[C]`.
    pub fn sum_to_channels(&mut self, x: Var) -> Result<Var> {
        let (n, c, inner) = nc_inner(self.shape(x))?;
        let mut out = vec![T::zero(); c];
        let d = self.value(x).data();
        for bi in 0..n {
            for (ci, o) in out.iter_mut().enumerate() {
                let base = (bi * c + ci) * inner;
                for v in &d[base..base + inner] {
                    *o += *v;
                }
            }
        }
        let value = Array::new(vec![c], out)?;
        Ok(self.push(value, Op::SumToChannels(x)))
    }

    /// Broadcasts `b[C]` to `shape = [N, C, ...]`.
    pub fn broadcast_channels(&mut self, b: Var, shape: &[usize]) -> Result<Var> {
        let (n, c, inner) = nc_inner(shape)?;
        same_shape("broadcast_channels", self.shape(b), &[c])?;
        let bias = self.value(b).data();
        let mut out = Vec::with_capacity(n * c * inner);
        for _ in 0..n {
            for bv in bias {
                out.extend(core::iter::repeat(*bv).take(inner));
            }
        }
        let value = Array::new(shape.to_vec(), out)?;
        Ok(self.push(value, Op::BroadcastChannels(b)))
    }

    /// Sums over the channel axis, keeping it with size 1.
    pub fn channel_sum(&mut self, x: Var) -> Result<Var> {
        let (n, c, inner) = nc_inner(self.shape(x))?;
        let d = self.value(x).data();
        let mut out = vec![T::zero(); n * inner];
        for bi in 0..n {
            let o = &mut out[bi * inner..(bi + 1) * inner];
            for ci in 0..c {
                let base = (bi * c + ci) * inner;
                for (ov, v) in o.iter_mut().zip(&d[base..base + inner]) {
                    *ov += *v;
                }
            }
        }
        let mut shape = self.shape(x).to_vec();
        shape[1] = 1;
        let value = Array::new(shape, out)?;
        Ok(self.push(value, Op::ChannelSum(x)))
    }

    /// Repeats a single-channel `[N, 1, ...]` tensor `c` times along axis 1.
    pub fn channel_repeat(&mut self, x: Var, c: usize) -> Result<Var> {
        let (n, one, inner) = nc_inner(self.shape(x))?;
        if one != 1 {
            return Err(invalid("channel_repeat expects a single channel"));
        }
        let d = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * inner);
        for bi in 0..n {
            for _ in 0..c {
                out.extend_from_slice(&d[bi * inner..(bi + 1) * inner]);
            }
        }
        let mut shape = self.shape(x).to_vec();
        shape[1] = c;
        let value = Array::new(shape, out)?;
        Ok(self.push(value, Op::ChannelRepeat(x)))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().fold(T::zero(), |a, v| a + *v);
        self.push(Array::scalar(s), Op::SumAll(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1);
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn sum_sq(&mut self, x: Var) -> Var {
        let sq = self.mul(x, x).expect("a tensor matches its own shape");
        self.sum(sq)
    }

    /// Broadcasts a one-element tensor to `shape`.
    pub fn expand(&mut self, s: Var, shape: &[usize]) -> Result<Var> {
        same_shape("expand", self.shape(s), &[1])?;
        let v = self.scalar_value(s);
        Ok(self.push(Array::full(shape, v), Op::ExpandAll(s)))
    }

    /// Sums each sample of `x[N, ...]`, giving `[N]`.
    pub fn sum_per_sample(&mut self, x: Var) -> Var {
        let (n, inner) = self.value(x).split_first();
        let d = self.value(x).data();
        let out = (0..n).map(|b| d[b * inner..(b + 1) * inner].iter().fold(T::zero(), |a, v| a + *v)).collect();
        let value = Array::new(vec![n], out).expect("one sum per sample");
        self.push(value, Op::SumPerSample(x))
    }

    /// Broadcasts `s[N]` to `shape = [N, ...]`.
    pub fn expand_per_sample(&mut self, s: Var, shape: &[usize]) -> Result<Var> {
        let n = shape.first().copied().unwrap_or(0);
        same_shape("expand_per_sample", self.shape(s), &[n])?;
        let inner: usize = shape[1..].iter().product();
        let d = self.value(s).data();
        let mut out = Vec::with_capacity(n * inner);
        for v in d {
            out.extend(core::iter::repeat(*v).take(inner));
        }
        let value = Array::new(shape.to_vec(), out)?;
        Ok(self.push(value, Op::ExpandPerSample(s)))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, spec: ConvSpec) -> Result<Var> {
        let value = kernels::conv2d(self.value(x), self.value(w), spec)?;
        Ok(self.push(value, Op::Conv(x, w, spec)))
    }

    /// Transposed convolution: the adjoint of `conv2d(., w, spec)` applied to
    /// `x`, producing spatial size `out_hw`. `w` is `[C_in(x), C_out, KH, KW]`.
    pub fn conv2d_transpose(&mut self, x: Var, w: Var, spec: ConvSpec, out_hw: (usize, usize)) -> Result<Var> {
        let value = kernels::conv2d_bwd_data(self.value(x), self.value(w), spec, out_hw)?;
        Ok(self.push(value, Op::ConvBwdData(x, w, spec)))
    }

    /// Weight gradient of `conv2d(x, ., spec)` for upstream gradient `gy`.
    pub fn conv2d_bwd_filter(&mut self, x: Var, gy: Var, spec: ConvSpec, kernel: (usize, usize)) -> Result<Var> {
        let value = kernels::conv2d_bwd_filter(self.value(x), self.value(gy), spec, kernel)?;
        Ok(self.push(value, Op::ConvBwdFilter(x, gy, spec)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = kernels::matmul(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = kernels::transpose(self.value(a))?;
        Ok(self.push(value, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    /// Concatenation along the channel axis (axis 1).
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let arrays: Vec<&Array<T>> = parts.iter().map(|p| self.value(*p)).collect();
        let value = kernels::concat_channels(&arrays)?;
        Ok(self.push(value, Op::Concat(parts.to_vec())))
    }

    pub fn slice_channels(&mut self, x: Var, offset: usize, len: usize) -> Result<Var> {
        let value = kernels::slice_channels(self.value(x), offset, len)?;
        Ok(self.push(value, Op::SliceChannels(x, offset)))
    }

    /// Embeds `x` at channel `offset` of a zero tensor with `total` channels.
    pub fn pad_channels(&mut self, x: Var, offset: usize, total: usize) -> Result<Var> {
        let value = kernels::pad_channels(self.value(x), offset, total)?;
        Ok(self.push(value, Op::PadChannels(x, offset)))
    }

    /// Per-sample `h x w` crop; `boxes[n] = (y0, x0)`.
    pub fn crop(&mut self, x: Var, boxes: &[(usize, usize)], h: usize, w: usize) -> Result<Var> {
        let value = kernels::crop(self.value(x), boxes, h, w)?;
        Ok(self.push(value, Op::Crop(x, boxes.to_vec())))
    }

    /// Places each sample of `x` at its box inside a zero `hh x ww` map.
    pub fn uncrop(&mut self, x: Var, boxes: &[(usize, usize)], hh: usize, ww: usize) -> Result<Var> {
        let value = kernels::uncrop(self.value(x), boxes, hh, ww)?;
        Ok(self.push(value, Op::Uncrop(x, boxes.to_vec())))
    }

    fn mask_const(&mut self, of: Var, f: impl Fn(T) -> T) -> Var {
        let value = self.value(of).map(f);
        self.constant(value)
    }

    /// Gradients of scalar `y` with respect to `wrt`, recorded as graph nodes
    /// (create-graph mode): the results can be differentiated again.
    /// Variables that `y` does not depend on get a zero gradient.
    pub fn grad(&mut self, y: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        if self.value(y).len() != 1 {
            return Err(invalid(alloc::format!("gradient of a non-scalar tensor {:?}", self.shape(y))));
        }
        let n = y.0 + 1;
        let mut reach = vec![false; n];
        for w in wrt {
            if w.0 < n {
                reach[w.0] = true;
            }
        }
        for i in 0..n {
            if !reach[i] {
                reach[i] = self.nodes[i].op.parents().iter().any(|p| reach[p.0]);
            }
        }
        let mut grads: Vec<Option<Var>> = vec![None; n];
        if reach[y.0] {
            let seed = Array::full(self.shape(y), T::one());
            grads[y.0] = Some(self.constant(seed));
        }
        for i in (0..n).rev() {
            let Some(g) = grads[i] else { continue };
            if !reach[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let me = Var(i);
            let mut put = |graph: &mut Self, p: Var, contrib: Var| -> Result<()> {
                grads[p.0] = Some(match grads[p.0] {
                    Some(old) => graph.add(old, contrib)?,
                    None => contrib,
                });
                Ok(())
            };
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    if reach[a.0] {
                        put(self, a, g)?;
                    }
                    if reach[b.0] {
                        put(self, b, g)?;
                    }
                }
                Op::Sub(a, b) => {
                    if reach[a.0] {
                        put(self, a, g)?;
                    }
                    if reach[b.0] {
                        let c = self.neg(g);
                        put(self, b, c)?;
                    }
                }
                Op::Mul(a, b) => {
                    if reach[a.0] {
                        let c = self.mul(g, b)?;
                        put(self, a, c)?;
                    }
                    if reach[b.0] {
                        let c = self.mul(g, a)?;
                        put(self, b, c)?;
                    }
                }
                Op::Div(a, b) => {
                    let ga = self.div(g, b)?;
                    if reach[a.0] {
                        put(self, a, ga)?;
                    }
                    if reach[b.0] {
                        // d(a/b)/db = -(a/b) / b
                        let t = self.mul(ga, me)?;
                        let c = self.neg(t);
                        put(self, b, c)?;
                    }
                }
                Op::Scale(a, k) => {
                    let c = self.scale(g, k);
                    put(self, a, c)?;
                }
                Op::AddScalar(a) => put(self, a, g)?,
                Op::Sqrt(a) => {
                    let twice = self.scale(me, 2.0);
                    let c = self.div(g, twice)?;
                    put(self, a, c)?;
                }
                Op::Abs(a) => {
                    let s = self.mask_const(a, |x| if x > T::zero() { T::one() } else if x < T::zero() { -T::one() } else { T::zero() });
                    let c = self.mul(g, s)?;
                    put(self, a, c)?;
                }
                Op::LeakyRelu(a, slope) => {
                    let sl = T::of(slope);
                    let s = self.mask_const(a, move |x| if x > T::zero() { T::one() } else { sl });
                    let c = self.mul(g, s)?;
                    put(self, a, c)?;
                }
                Op::Clamp(a, lo, hi) => {
                    let (l, h) = (T::of(lo), T::of(hi));
                    let s = self.mask_const(a, move |x| if x > l && x < h { T::one() } else { T::zero() });
                    let c = self.mul(g, s)?;
                    put(self, a, c)?;
                }
                Op::Sigmoid(a) => {
                    let neg = self.neg(me);
                    let one_minus = self.add_scalar(neg, 1.0);
                    let d = self.mul(me, one_minus)?;
                    let c = self.mul(g, d)?;
                    put(self, a, c)?;
                }
                Op::Softplus(a) => {
                    let s = self.sigmoid(a);
                    let c = self.mul(g, s)?;
                    put(self, a, c)?;
                }
                Op::AddBias(x, b) => {
                    if reach[x.0] {
                        put(self, x, g)?;
                    }
                    if reach[b.0] {
                        let c = self.sum_to_channels(g)?;
                        put(self, b, c)?;
                    }
                }
                Op::SumToChannels(x) => {
                    let shape = self.shape(x).to_vec();
                    let c = self.broadcast_channels(g, &shape)?;
                    put(self, x, c)?;
                }
                Op::BroadcastChannels(b) => {
                    let c = self.sum_to_channels(g)?;
                    put(self, b, c)?;
                }
                Op::ChannelSum(x) => {
                    let ch = self.shape(x)[1];
                    let c = self.channel_repeat(g, ch)?;
                    put(self, x, c)?;
                }
                Op::ChannelRepeat(x) => {
                    let c = self.channel_sum(g)?;
                    put(self, x, c)?;
                }
                Op::SumAll(x) => {
                    let shape = self.shape(x).to_vec();
                    let c = self.expand(g, &shape)?;
                    put(self, x, c)?;
                }
                Op::ExpandAll(s) => {
                    let c = self.sum(g);
                    put(self, s, c)?;
                }
                Op::SumPerSample(x) => {
                    let shape = self.shape(x).to_vec();
                    let c = self.expand_per_sample(g, &shape)?;
                    put(self, x, c)?;
                }
                Op::ExpandPerSample(s) => {
                    let c = self.sum_per_sample(g);
                    put(self, s, c)?;
                }
                Op::Conv(x, w, spec) => {
                    if reach[x.0] {
                        let [_, _, h, wd] = shape4(self.shape(x), "conv input")?;
                        let c = self.conv2d_transpose(g, w, spec, (h, wd))?;
                        put(self, x, c)?;
                    }
                    if reach[w.0] {
                        let [_, _, kh, kw] = shape4(self.shape(w), "conv weight")?;
                        let c = self.conv2d_bwd_filter(x, g, spec, (kh, kw))?;
                        put(self, w, c)?;
                    }
                }
                Op::ConvBwdData(gy, w, spec) => {
                    if reach[gy.0] {
                        let c = self.conv2d(g, w, spec)?;
                        put(self, gy, c)?;
                    }
                    if reach[w.0] {
                        let [_, _, kh, kw] = shape4(self.shape(w), "conv weight")?;
                        let c = self.conv2d_bwd_filter(g, gy, spec, (kh, kw))?;
                        put(self, w, c)?;
                    }
                }
                Op::ConvBwdFilter(x, gy, spec) => {
                    if reach[x.0] {
                        let [_, _, h, wd] = shape4(self.shape(x), "conv input")?;
                        let c = self.conv2d_transpose(gy, g, spec, (h, wd))?;
                        put(self, x, c)?;
                    }
                    if reach[gy.0] {
                        let c = self.conv2d(x, g, spec)?;
                        put(self, gy, c)?;
                    }
                }
                Op::MatMul(a, b) => {
                    if reach[a.0] {
                        let bt = self.transpose(b)?;
                        let c = self.matmul(g, bt)?;
                        put(self, a, c)?;
                    }
                    if reach[b.0] {
                        let at = self.transpose(a)?;
                        let c = self.matmul(at, g)?;
                        put(self, b, c)?;
                    }
                }
                Op::Transpose(a) => {
                    let c = self.transpose(g)?;
                    put(self, a, c)?;
                }
                Op::Reshape(a) => {
                    let shape = self.shape(a).to_vec();
                    let c = self.reshape(g, &shape)?;
                    put(self, a, c)?;
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.shape(p)[1];
                        if reach[p.0] {
                            let c = self.slice_channels(g, offset, len)?;
                            put(self, p, c)?;
                        }
                        offset += len;
                    }
                }
                Op::SliceChannels(x, offset) => {
                    let total = self.shape(x)[1];
                    let c = self.pad_channels(g, offset, total)?;
                    put(self, x, c)?;
                }
                Op::PadChannels(x, offset) => {
                    let len = self.shape(x)[1];
                    let c = self.slice_channels(g, offset, len)?;
                    put(self, x, c)?;
                }
                Op::Crop(x, boxes) => {
                    let [_, _, hh, ww] = shape4(self.shape(x), "crop input")?;
                    let c = self.uncrop(g, &boxes, hh, ww)?;
                    put(self, x, c)?;
                }
                Op::Uncrop(x, boxes) => {
                    let [_, _, h, w] = shape4(self.shape(x), "uncrop input")?;
                    let c = self.crop(g, &boxes, h, w)?;
                    put(self, x, c)?;
                }
            }
        }
        let mut out = Vec::with_capacity(wrt.len());
        for w in wrt {
            out.push(match grads.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let z = Array::zeros(self.shape(*w));
                    self.constant(z)
                }
            });
        }
        Ok(out)
    }

    /// First-order gradients of scalar `loss` for every leaf created with
    /// `requires_grad`. Backward nodes are discarded afterwards.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        let params: Vec<Var> = (0..=loss.0)
            .filter(|i| matches!(self.nodes[*i].op, Op::Leaf) && self.nodes[*i].requires_grad)
            .map(Var)
            .collect();
        let mark = self.nodes.len();
        let gs = self.grad(loss, &params)?;
        let entries = params.iter().zip(&gs).map(|(p, g)| (*p, self.value(*g).clone())).collect();
        self.nodes.truncate(mark);
        Ok(Gradients { entries })
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softplus<T: Scalar>(x: T) -> T {
    // max(x, 0) + ln(1 + e^-|x|)
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}
