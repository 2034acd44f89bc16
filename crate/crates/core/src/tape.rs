//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Every operation appends a node holding its forward value plus whatever it
//! needs for the backward pass. Nodes are only ever appended, so inputs
//! always precede their consumers and a single reverse sweep visits each node
//! exactly once. [`Tape::backward`] consumes the tape.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::conv::{conv2d_backward, conv2d_forward, ConvGeometry};
use crate::ops::linalg::{gemm_acc, transpose};
use crate::ops::pool::{pool2d_backward, pool2d_forward, PoolGeometry, PoolKind};
use crate::ops::resample::{resize_backward, resize_forward, UpsampleMode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const PATTERN_SEED: u64 = 0xCBF2_9CE4_8422_2325;
const PATTERN_PRIME: u64 = 0x0000_0100_0000_01B3;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Elementwise {
    Add,
    Mul,
}

/// Deliberate backward-pass corruption, used to prove the gradient checker
/// catches a broken op.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    SigmoidBackward,
}

/// How the second operand of an element-wise op maps onto the first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    Scalar,
    /// Second operand has the first operand's shape minus the batch axis.
    OverBatch,
}

impl Broadcast {
    fn resolve(a: &[usize], b: &[usize]) -> Option<Broadcast> {
        if a == b {
            Some(Broadcast::Same)
        } else if b.iter().product::<usize>() == 1 {
            Some(Broadcast::Scalar)
        } else if a.len() > 1 && &a[1..] == b {
            Some(Broadcast::OverBatch)
        } else {
            None
        }
    }

    #[inline]
    fn index(self, i: usize, b_len: usize) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::Scalar => 0,
            Broadcast::OverBatch => i % b_len,
        }
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeometry,
    },
    Pool {
        x: Var,
        kind: PoolKind,
        geom: PoolGeometry,
        argmax: Vec<usize>,
    },
    Resize {
        x: Var,
        mode: UpsampleMode,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
        bc: Broadcast,
    },
    Mul {
        a: Var,
        b: Var,
        bc: Broadcast,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    GlobalAvgPool {
        x: Var,
    },
    Concat {
        xs: Vec<Var>,
    },
    ChannelMeanExpand {
        x: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Vec<T>,
        labels: Vec<usize>,
    },
    Sum {
        x: Var,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    fault: Option<Fault>,
    track_kinks: bool,
    pattern: u64,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            fault: None,
            track_kinks: false,
            pattern: PATTERN_SEED,
        }
    }

    pub fn with_fault(mut self, fault: Option<Fault>) -> Self {
        self.fault = fault;
        self
    }

    /// Fingerprints the piecewise-linear regime of the forward pass: the
    /// sign pattern of every ReLU input and the winner of every max-pool
    /// window. See [`Tape::activation_pattern`].
    pub fn tracking_kinks(mut self) -> Self {
        self.track_kinks = true;
        self
    }

    /// Hash of the activation pattern recorded so far. Two forward passes
    /// with equal patterns lie on the same smooth piece of the function, so
    /// a finite difference between them is meaningful.
    pub fn activation_pattern(&self) -> u64 {
        self.pattern
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn note_pattern(&mut self, words: impl Iterator<Item = u64>) {
        for w in words {
            self.pattern = (self.pattern ^ w).wrapping_mul(PATTERN_PRIME);
        }
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, geom: ConvGeometry) -> Result<Var> {
        let out = conv2d_forward(self.value(x), self.value(w), self.value(b), geom)?;
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(out, Op::Conv2d { x, w, b, geom }, rg))
    }

    pub fn pool2d(&mut self, x: Var, kind: PoolKind, geom: PoolGeometry) -> Result<Var> {
        let out = pool2d_forward(self.value(x), kind, geom)?;
        if self.track_kinks && kind == PoolKind::Max {
            self.note_pattern(out.argmax.iter().map(|&i| i as u64));
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(
            out.output,
            Op::Pool {
                x,
                kind,
                geom,
                argmax: out.argmax,
            },
            rg,
        ))
    }

    pub fn upsample(&mut self, x: Var, factor: usize, mode: UpsampleMode) -> Result<Var> {
        if factor == 0 {
            return Err(Error::shape("upsample", "factor must be >= 1"));
        }
        let (_, _, h, w) = self.value(x).dims4("upsample")?;
        self.resize(x, h * factor, w * factor, mode)
    }

    pub fn resize(&mut self, x: Var, oh: usize, ow: usize, mode: UpsampleMode) -> Result<Var> {
        let out = resize_forward(self.value(x), oh, ow, mode)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Resize { x, mode }, rg))
    }

    pub fn activate(&mut self, x: Var, kind: Activation) -> Var {
        match kind {
            Activation::Relu => self.relu(x),
            Activation::Sigmoid => self.sigmoid(x),
        }
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let input = self.value(x);
        let out = input.map(|v| if v > T::zero() { v } else { T::zero() });
        if self.track_kinks {
            let signs: Vec<u64> = input
                .data()
                .iter()
                .map(|&v| u64::from(v > T::zero()))
                .collect();
            self.note_pattern(signs.into_iter());
        }
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Relu { x }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Sigmoid { x }, rg)
    }

    pub fn elementwise(&mut self, kind: Elementwise, a: Var, b: Var) -> Result<Var> {
        match kind {
            Elementwise::Add => self.add(a, b),
            Elementwise::Mul => self.mul(a, b),
        }
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        Broadcast::resolve(sa, sb)
            .ok_or_else(|| Error::shape(op, format!("cannot combine {sa:?} with {sb:?}")))
    }

    fn zip_with(&self, a: Var, b: Var, bc: Broadcast, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (ta, tb) = (self.value(a), self.value(b));
        let b_len = tb.numel();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &va)| f(va, tb.data()[bc.index(i, b_len)]))
            .collect();
        Tensor::from_parts(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let bc = self.broadcast("add", a, b)?;
        let out = self.zip_with(a, b, bc, |x, y| x + y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add { a, b, bc }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let bc = self.broadcast("mul", a, b)?;
        let out = self.zip_with(a, b, bc, |x, y| x * y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Mul { a, b, bc }, rg))
    }

    /// `x[N,D] · w[D,K] + b[K]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, d) = self.value(x).dims2("dense")?;
        let (wd, k) = self.value(w).dims2("dense")?;
        if wd != d || self.value(b).shape() != [k] {
            return Err(Error::shape(
                "dense",
                format!(
                    "input {:?}, weight {:?} and bias {:?} do not chain",
                    self.value(x).shape(),
                    self.value(w).shape(),
                    self.value(b).shape()
                ),
            ));
        }
        let mut out = Vec::with_capacity(n * k);
        for _ in 0..n {
            out.extend_from_slice(self.value(b).data());
        }
        gemm_acc(
            n,
            d,
            k,
            self.value(x).data(),
            self.value(w).data(),
            &mut out,
        );
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(
            Tensor::from_parts(vec![n, k], out),
            Op::Dense { x, w, b },
            rg,
        ))
    }

    /// Per-channel spatial mean, `[N,C,H,W] -> [N,C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4("global_avg_pool")?;
        let area = T::from_usize(h * w).expect("plane size");
        let out = self
            .value(x)
            .data()
            .chunks(h * w)
            .map(|plane| plane.iter().copied().sum::<T>() / area)
            .collect();
        let rg = self.any_grad(&[x]);
        Ok(self.push(
            Tensor::from_parts(vec![n, c], out),
            Op::GlobalAvgPool { x },
            rg,
        ))
    }

    /// Stacks NCHW tensors along the channel axis, in list order.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::shape("concat_channels", "no inputs"))?;
        let (n, _, h, w) = self.value(*first).dims4("concat_channels")?;
        let mut total = 0;
        for &x in xs {
            let (xn, xc, xh, xw) = self.value(x).dims4("concat_channels")?;
            if (xn, xh, xw) != (n, h, w) {
                return Err(Error::shape(
                    "concat_channels",
                    format!(
                        "{:?} does not match {:?} outside the channel axis",
                        self.value(x).shape(),
                        self.value(*first).shape()
                    ),
                ));
            }
            total += xc;
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(n * total * plane);
        for img in 0..n {
            for &x in xs {
                let c = self.value(x).shape()[1];
                let len = c * plane;
                out.extend_from_slice(&self.value(x).data()[img * len..(img + 1) * len]);
            }
        }
        let rg = self.any_grad(xs);
        Ok(self.push(
            Tensor::from_parts(vec![n, total, h, w], out),
            Op::Concat { xs: xs.to_vec() },
            rg,
        ))
    }

    /// Replaces every channel with the mean over channels at that pixel.
    pub fn channel_mean_expand(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4("channel_mean_expand")?;
        let plane = h * w;
        let count = T::from_usize(c).expect("channel count");
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * plane);
        for img in 0..n {
            let base = img * c * plane;
            let mean: Vec<T> = (0..plane)
                .map(|p| (0..c).map(|ch| src[base + ch * plane + p]).sum::<T>() / count)
                .collect();
            for _ in 0..c {
                out.extend_from_slice(&mean);
            }
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(
            Tensor::from_parts(vec![n, c, h, w], out),
            Op::ChannelMeanExpand { x },
            rg,
        ))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (n, k) = self.value(logits).dims2("softmax_cross_entropy")?;
        if labels.len() != n {
            return Err(Error::Input(format!(
                "{} labels for a batch of {n}",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Input(format!("label {bad} outside [0, {k})")));
        }
        let z = self.value(logits).data();
        let mut probs = Vec::with_capacity(n * k);
        let mut total = T::zero();
        for (row, &label) in z.chunks(k).zip(labels) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            total += lse - row[label];
            probs.extend(row.iter().map(|&v| (v - lse).exp()));
        }
        let loss = total / T::from_usize(n).expect("batch size");
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).sum();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(total), Op::Sum { x }, rg)
    }

    /// Propagates d(loss)/d(node) back through the tape and returns the
    /// gradients of every leaf that requires one. Leaves used more than once
    /// accumulate.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let g = Tensor::from_parts(node.value.shape().to_vec(), g);
            self.node_backward(node, &g, &mut grads)?;
        }

        let leaves = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, node.requires_grad) {
                (Op::Leaf, true) => Some(Tensor::from_parts(
                    node.value.shape().to_vec(),
                    g.unwrap_or_else(|| vec![T::zero(); node.value.numel()]),
                )),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads: leaves })
    }

    fn node_backward(
        &self,
        node: &Node<T>,
        g: &Tensor<T>,
        grads: &mut [Option<Vec<T>>],
    ) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let want = [
                    self.requires_grad(*x),
                    self.requires_grad(*w),
                    self.requires_grad(*b),
                ];
                let d = conv2d_backward(
                    self.value(*x),
                    self.value(*w),
                    self.value(*b),
                    *geom,
                    g,
                    want,
                )?;
                for (var, grad) in [(*x, d.input), (*w, d.weight), (*b, d.bias)] {
                    if let Some(grad) = grad {
                        accumulate(grads, var, grad.data());
                    }
                }
            }
            Op::Pool {
                x,
                kind,
                geom,
                argmax,
            } => {
                let d = pool2d_backward(self.value(*x).shape(), *kind, *geom, argmax, g);
                accumulate(grads, *x, d.data());
            }
            Op::Resize { x, mode } => {
                let d = resize_backward(self.value(*x).shape(), *mode, g);
                accumulate(grads, *x, d.data());
            }
            Op::Relu { x } => {
                let d: Vec<T> = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &gi)| if v > T::zero() { gi } else { T::zero() })
                    .collect();
                accumulate(grads, *x, &d);
            }
            Op::Sigmoid { x } => {
                let skew = match self.fault {
                    Some(Fault::SigmoidBackward) => T::from_f64_lossy(1.05),
                    None => T::one(),
                };
                let d: Vec<T> = node
                    .value
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&y, &gi)| gi * y * (T::one() - y) * skew)
                    .collect();
                accumulate(grads, *x, &d);
            }
            Op::Add { a, b, bc } => {
                if self.requires_grad(*a) {
                    accumulate(grads, *a, g.data());
                }
                if self.requires_grad(*b) {
                    let d = reduce_broadcast(g.data(), None, *bc, self.value(*b).numel());
                    accumulate(grads, *b, &d);
                }
            }
            Op::Mul { a, b, bc } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    let b_len = tb.numel();
                    let d: Vec<T> = g
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, &gi)| gi * tb.data()[bc.index(i, b_len)])
                        .collect();
                    accumulate(grads, *a, &d);
                }
                if self.requires_grad(*b) {
                    let d = reduce_broadcast(g.data(), Some(ta.data()), *bc, tb.numel());
                    accumulate(grads, *b, &d);
                }
            }
            Op::Dense { x, w, b } => {
                let (n, d) = self.value(*x).dims2("dense")?;
                let k = self.value(*b).numel();
                if self.requires_grad(*x) {
                    let wt = transpose(d, k, self.value(*w).data());
                    let mut dx = vec![T::zero(); n * d];
                    gemm_acc(n, k, d, g.data(), &wt, &mut dx);
                    accumulate(grads, *x, &dx);
                }
                if self.requires_grad(*w) {
                    let xt = transpose(n, d, self.value(*x).data());
                    let mut dw = vec![T::zero(); d * k];
                    gemm_acc(d, n, k, &xt, g.data(), &mut dw);
                    accumulate(grads, *w, &dw);
                }
                if self.requires_grad(*b) {
                    let mut db = vec![T::zero(); k];
                    for row in g.data().chunks(k) {
                        for (acc, &v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    accumulate(grads, *b, &db);
                }
            }
            Op::GlobalAvgPool { x } => {
                let (_, _, h, w) = self.value(*x).dims4("global_avg_pool")?;
                let area = T::from_usize(h * w).expect("plane size");
                let mut d = Vec::with_capacity(self.value(*x).numel());
                for &gi in g.data() {
                    let share = gi / area;
                    d.extend(std::iter::repeat_n(share, h * w));
                }
                accumulate(grads, *x, &d);
            }
            Op::Concat { xs } => {
                let (n, total, h, w) = g.dims4("concat_channels")?;
                let plane = h * w;
                let mut offset = 0;
                for &x in xs {
                    let c = self.value(x).shape()[1];
                    if self.requires_grad(x) {
                        let mut d = Vec::with_capacity(n * c * plane);
                        for img in 0..n {
                            let start = (img * total + offset) * plane;
                            d.extend_from_slice(&g.data()[start..start + c * plane]);
                        }
                        accumulate(grads, x, &d);
                    }
                    offset += c;
                }
            }
            Op::ChannelMeanExpand { x } => {
                let (n, c, h, w) = g.dims4("channel_mean_expand")?;
                let plane = h * w;
                let count = T::from_usize(c).expect("channel count");
                let mut d = Vec::with_capacity(n * c * plane);
                for img in 0..n {
                    let base = img * c * plane;
                    let share: Vec<T> = (0..plane)
                        .map(|p| {
                            (0..c).map(|ch| g.data()[base + ch * plane + p]).sum::<T>() / count
                        })
                        .collect();
                    for _ in 0..c {
                        d.extend_from_slice(&share);
                    }
                }
                accumulate(grads, *x, &d);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels,
            } => {
                let n = labels.len();
                let k = probs.len() / n;
                let scale = g.data()[0] / T::from_usize(n).expect("batch size");
                let mut d: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (row, &label) in labels.iter().enumerate() {
                    d[row * k + label] -= scale;
                }
                accumulate(grads, *logits, &d);
            }
            Op::Sum { x } => {
                let d = vec![g.data()[0]; self.value(*x).numel()];
                accumulate(grads, *x, &d);
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], var: Var, delta: &[T]) {
    match &mut grads[var.0] {
        Some(acc) => {
            for (a, &d) in acc.iter_mut().zip(delta) {
                *a += d;
            }
        }
        slot @ None => *slot = Some(delta.to_vec()),
    }
}

/// Sums `g` (optionally times `other`) back down to a broadcast operand.
fn reduce_broadcast<T: Scalar>(g: &[T], other: Option<&[T]>, bc: Broadcast, len: usize) -> Vec<T> {
    let term = |i: usize| match other {
        Some(o) => g[i] * o[i],
        None => g[i],
    };
    match bc {
        Broadcast::Same => (0..g.len()).map(term).collect(),
        _ => {
            let mut d = vec![T::zero(); len];
            for i in 0..g.len() {
                d[bc.index(i, len)] += term(i);
            }
            d
        }
    }
}

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
