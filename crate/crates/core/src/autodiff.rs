//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation in execution order; since an operation
//! can only consume values that already exist, the tape is a topological order
//! and [`Graph::backward`] simply walks it in reverse, visiting each node once.

use crate::error::{Error, Result};
use crate::kernels::{self, ConvSpec};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    Sqrt(Var),
    Sigmoid(Var),
    Gelu(Var),
    LeakyRelu(Var, f64),
    Matmul(Var, Var),
    Transpose(Var),
    Softmax(Var, usize),
    Reshape(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: ConvSpec,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    },
    Warp {
        x: Var,
        flow: Tensor,
    },
    PixelShuffle(Var, usize),
    PixelUnshuffle(Var, usize),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    MulChannels(Var, Var),
    DivBatch(Var, Var),
    L2NormalizeLast(Var, f64),
    MaxLast(Var),
    Sum(Var),
    Mean(Var),
    WindowPartition(Var, usize),
    WindowMerge(Var, usize),
    PadReflect(Var),
    Crop(Var),
}

/// Names of every differentiable tape operation, as reported by [`Graph::op_trace`].
pub const OP_NAMES: &[&str] = &[
    "add",
    "sub",
    "mul",
    "div",
    "add_scalar",
    "mul_scalar",
    "sqrt",
    "sigmoid",
    "gelu",
    "leaky_relu",
    "matmul",
    "transpose",
    "softmax",
    "reshape",
    "conv2d",
    "layer_norm",
    "bilinear_warp",
    "pixel_shuffle",
    "pixel_unshuffle",
    "concat",
    "slice",
    "mul_channels",
    "div_batch",
    "l2_normalize",
    "max_last",
    "sum",
    "mean",
    "window_partition",
    "window_merge",
    "pad_reflect",
    "crop",
];

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::AddScalar(..) => "add_scalar",
            Op::MulScalar(..) => "mul_scalar",
            Op::Sqrt(..) => "sqrt",
            Op::Sigmoid(..) => "sigmoid",
            Op::Gelu(..) => "gelu",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Matmul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Softmax(..) => "softmax",
            Op::Reshape(..) => "reshape",
            Op::Conv2d { .. } => "conv2d",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Warp { .. } => "bilinear_warp",
            Op::PixelShuffle(..) => "pixel_shuffle",
            Op::PixelUnshuffle(..) => "pixel_unshuffle",
            Op::Concat(..) => "concat",
            Op::Slice { .. } => "slice",
            Op::MulChannels(..) => "mul_channels",
            Op::DivBatch(..) => "div_batch",
            Op::L2NormalizeLast(..) => "l2_normalize",
            Op::MaxLast(..) => "max_last",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::WindowPartition(..) => "window_partition",
            Op::WindowMerge(..) => "window_merge",
            Op::PadReflect(..) => "pad_reflect",
            Op::Crop(..) => "crop",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every leaf that requires them.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` did not influence the loss.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

fn add_into(slot: &mut Option<Vec<f64>>, delta: Vec<f64>) {
    match slot {
        Some(acc) => {
            for (a, d) in acc.iter_mut().zip(delta) {
                *a += d;
            }
        }
        None => *slot = Some(delta),
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Op names in recording order; two graphs built by the same recipe match exactly.
    pub fn op_trace(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.op.name()).collect()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

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
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x / y)?;
        Ok(self.push(v, Op::Div(a, b), &[a, b]))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a), &[a])
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::MulScalar(a, c), &[a])
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::sqrt);
        self.push(v, Op::Sqrt(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(kernels::sigmoid);
        self.push(v, Op::Sigmoid(a), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(kernels::gelu);
        self.push(v, Op::Gelu(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).map(|x| if x >= 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, 0.0)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = kernels::matmul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Matmul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = kernels::transpose_last(self.value(a))?;
        Ok(self.push(v, Op::Transpose(a), &[a]))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let v = kernels::softmax(self.value(a), axis)?;
        Ok(self.push(v, Op::Softmax(a, axis), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a), &[a]))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let v = kernels::conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), spec)?;
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(v, Op::Conv2d { x, w, b, spec }, &parents))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let v = kernels::layer_norm(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(
            v,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                eps,
            },
            &[x, gamma, beta],
        ))
    }

    /// Warps `x` by a fixed (non-differentiated) flow field.
    pub fn warp(&mut self, x: Var, flow: &Tensor) -> Result<Var> {
        let v = kernels::bilinear_warp(self.value(x), flow)?;
        Ok(self.push(
            v,
            Op::Warp {
                x,
                flow: flow.clone(),
            },
            &[x],
        ))
    }

    pub fn pixel_shuffle(&mut self, x: Var, s: usize) -> Result<Var> {
        let v = kernels::pixel_shuffle(self.value(x), s)?;
        Ok(self.push(v, Op::PixelShuffle(x, s), &[x]))
    }

    pub fn pixel_unshuffle(&mut self, x: Var, s: usize) -> Result<Var> {
        let v = kernels::pixel_unshuffle(self.value(x), s)?;
        Ok(self.push(v, Op::PixelUnshuffle(x, s), &[x]))
    }

    /// Concatenates along axis 0; trailing extents must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for p in parts {
            let t = self.value(*p);
            if t.shape()[1..] != tail[..] {
                return Err(Error::dim("concat", self.shape(*first), t.shape()));
            }
            lead += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let v = Tensor::new(&shape, data)?;
        Ok(self.push(v, Op::Concat(parts.to_vec()), parts))
    }

    /// Rows `start..start+len` along axis 0.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let lead = t.shape()[0];
        if len == 0 || start + len > lead {
            return Err(Error::dim("slice", t.shape(), &[start, len]));
        }
        let inner: usize = t.shape()[1..].iter().product();
        let mut shape = t.shape().to_vec();
        shape[0] = len;
        let v = Tensor::new(
            &shape,
            t.data()[start * inner..(start + len) * inner].to_vec(),
        )?;
        Ok(self.push(v, Op::Slice { x, start }, &[x]))
    }

    /// Splits axis 0 into `n` equal parts.
    pub fn chunk(&mut self, x: Var, n: usize) -> Result<Vec<Var>> {
        let lead = self.shape(x)[0];
        if n == 0 || lead % n != 0 {
            return Err(Error::dim("chunk", self.shape(x), &[n]));
        }
        let len = lead / n;
        (0..n).map(|i| self.slice(x, i * len, len)).collect()
    }

    /// Scales each slice along axis 0 of `x` by the matching entry of `w`.
    pub fn mul_channels(&mut self, x: Var, w: Var) -> Result<Var> {
        let (t, s) = (self.value(x), self.value(w));
        if s.numel() != t.shape()[0] {
            return Err(Error::dim("mul_channels", t.shape(), s.shape()));
        }
        let inner = t.numel() / t.shape()[0];
        let data = t
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * s.data()[i / inner])
            .collect();
        let v = Tensor::new(t.shape(), data)?;
        Ok(self.push(v, Op::MulChannels(x, w), &[x, w]))
    }

    /// Divides each slice along axis 0 of `x` by the matching entry of `s`.
    pub fn div_batch(&mut self, x: Var, s: Var) -> Result<Var> {
        let (t, d) = (self.value(x), self.value(s));
        if d.numel() != t.shape()[0] {
            return Err(Error::dim("div_batch", t.shape(), d.shape()));
        }
        let inner = t.numel() / t.shape()[0];
        let data = t
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v / d.data()[i / inner])
            .collect();
        let v = Tensor::new(t.shape(), data)?;
        Ok(self.push(v, Op::DivBatch(x, s), &[x, s]))
    }

    /// `x / max(‖x‖₂, eps)` along the last axis.
    pub fn l2_normalize(&mut self, x: Var, eps: f64) -> Var {
        let t = self.value(x);
        let n = *t.shape().last().expect("rank >= 1");
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(n) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(eps);
            row.iter_mut().for_each(|v| *v /= norm);
        }
        let v = Tensor::new(t.shape(), data).expect("same shape");
        self.push(v, Op::L2NormalizeLast(x, eps), &[x])
    }

    /// Maximum along the last axis, keeping it with extent 1.
    pub fn max_last(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let n = *t.shape().last().expect("rank >= 1");
        let data = t
            .data()
            .chunks(n)
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut shape = t.shape().to_vec();
        *shape.last_mut().expect("rank >= 1") = 1;
        let v = Tensor::new(&shape, data).expect("consistent shape");
        self.push(v, Op::MaxLast(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        self.push(v, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).mean());
        self.push(v, Op::Mean(x), &[x])
    }

    pub fn window_partition(&mut self, x: Var, win: usize) -> Result<Var> {
        let v = kernels::window_partition(self.value(x), win)?;
        Ok(self.push(v, Op::WindowPartition(x, win), &[x]))
    }

    pub fn window_merge(&mut self, x: Var, win: usize, h: usize, w: usize) -> Result<Var> {
        let v = kernels::window_merge(self.value(x), win, h, w)?;
        Ok(self.push(v, Op::WindowMerge(x, win), &[x]))
    }

    pub fn pad_reflect(&mut self, x: Var, bottom: usize, right: usize) -> Result<Var> {
        let v = kernels::pad_reflect(self.value(x), bottom, right)?;
        Ok(self.push(v, Op::PadReflect(x), &[x]))
    }

    pub fn crop(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let v = kernels::crop(self.value(x), h, w)?;
        Ok(self.push(v, Op::Crop(x), &[x]))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        let mut leaf_grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let gt = Tensor::new(node.value.shape(), g)?;
            if let Op::Leaf = node.op {
                leaf_grads[idx] = Some(gt);
                continue;
            }
            for (parent, delta) in self.local_grads(node, &gt)? {
                if self.nodes[parent.0].requires_grad {
                    add_into(&mut grads[parent.0], delta);
                }
            }
        }
        Ok(Gradients { grads: leaf_grads })
    }

    fn local_grads(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Vec<f64>)>> {
        let val = |v: Var| &self.nodes[v.0].value;
        let gd = g.data();
        let y = &node.value;
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) => vec![(*a, gd.to_vec()), (*b, gd.to_vec())],
            Op::Sub(a, b) => vec![(*a, gd.to_vec()), (*b, gd.iter().map(|v| -v).collect())],
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                vec![
                    (*a, gd.iter().zip(bv).map(|(g, b)| g * b).collect()),
                    (*b, gd.iter().zip(av).map(|(g, a)| g * a).collect()),
                ]
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                vec![
                    (*a, gd.iter().zip(bv).map(|(g, b)| g / b).collect()),
                    (
                        *b,
                        gd.iter()
                            .zip(av.iter().zip(bv))
                            .map(|(g, (a, b))| -g * a / (b * b))
                            .collect(),
                    ),
                ]
            }
            Op::AddScalar(a) => vec![(*a, gd.to_vec())],
            Op::MulScalar(a, c) => vec![(*a, gd.iter().map(|g| g * c).collect())],
            Op::Sqrt(a) => vec![(
                *a,
                gd.iter()
                    .zip(y.data())
                    .map(|(g, y)| g / (2.0 * y))
                    .collect(),
            )],
            Op::Sigmoid(a) => vec![(
                *a,
                gd.iter()
                    .zip(y.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect(),
            )],
            Op::Gelu(a) => vec![(
                *a,
                gd.iter()
                    .zip(val(*a).data())
                    .map(|(g, x)| g * kernels::gelu_grad(*x))
                    .collect(),
            )],
            Op::LeakyRelu(a, slope) => vec![(
                *a,
                gd.iter()
                    .zip(val(*a).data())
                    .map(|(g, x)| if *x >= 0.0 { *g } else { g * slope })
                    .collect(),
            )],
            Op::Matmul(a, b) => {
                let ga = kernels::matmul(g, &kernels::transpose_last(val(*b))?)?;
                let gb = kernels::matmul(&kernels::transpose_last(val(*a))?, g)?;
                vec![(*a, ga.into_data()), (*b, gb.into_data())]
            }
            Op::Transpose(a) => vec![(*a, kernels::transpose_last(g)?.into_data())],
            Op::Softmax(a, axis) => vec![(*a, kernels::softmax_backward(y, g, *axis))],
            Op::Reshape(a) => vec![(*a, gd.to_vec())],
            Op::Conv2d { x, w, b, spec } => {
                let (gx, gw, gb) = kernels::conv2d_backward(val(*x), val(*w), g, *spec)?;
                let mut out = vec![(*x, gx.into_data()), (*w, gw.into_data())];
                if let Some(b) = b {
                    out.push((*b, gb.into_data()));
                }
                out
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                eps,
            } => {
                let (gx, gg, gb) = kernels::layer_norm_backward(val(*x), val(*gamma), g, *eps)?;
                vec![(*x, gx), (*gamma, gg), (*beta, gb)]
            }
            Op::Warp { x, flow } => {
                vec![(*x, kernels::bilinear_warp_backward(val(*x), flow, g)?)]
            }
            Op::PixelShuffle(x, s) => vec![(*x, kernels::pixel_unshuffle(g, *s)?.into_data())],
            Op::PixelUnshuffle(x, s) => vec![(*x, kernels::pixel_shuffle(g, *s)?.into_data())],
            Op::Concat(parts) => {
                let mut offset = 0;
                parts
                    .iter()
                    .map(|p| {
                        let n = val(*p).numel();
                        let piece = gd[offset..offset + n].to_vec();
                        offset += n;
                        (*p, piece)
                    })
                    .collect()
            }
            Op::Slice { x, start } => {
                let xt = val(*x);
                let inner: usize = xt.shape()[1..].iter().product();
                let mut full = vec![0.0; xt.numel()];
                full[start * inner..start * inner + gd.len()].copy_from_slice(gd);
                vec![(*x, full)]
            }
            Op::MulChannels(x, w) => {
                let (xt, wt) = (val(*x), val(*w));
                let inner = xt.numel() / xt.shape()[0];
                let gx = gd
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g * wt.data()[i / inner])
                    .collect();
                let gw = gd
                    .chunks(inner)
                    .zip(xt.data().chunks(inner))
                    .map(|(g, x)| g.iter().zip(x).map(|(a, b)| a * b).sum())
                    .collect();
                vec![(*x, gx), (*w, gw)]
            }
            Op::DivBatch(x, s) => {
                let (xt, st) = (val(*x), val(*s));
                let inner = xt.numel() / xt.shape()[0];
                let gx = gd
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g / st.data()[i / inner])
                    .collect();
                let gs = gd
                    .chunks(inner)
                    .zip(xt.data().chunks(inner))
                    .zip(st.data())
                    .map(|((g, x), s)| -g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / (s * s))
                    .collect();
                vec![(*x, gx), (*s, gs)]
            }
            Op::L2NormalizeLast(x, eps) => {
                let xt = val(*x);
                let n = *xt.shape().last().expect("rank >= 1");
                let mut gx = vec![0.0; xt.numel()];
                for ((gr, (xr, yr)), out) in gd
                    .chunks(n)
                    .zip(xt.data().chunks(n).zip(y.data().chunks(n)))
                    .zip(gx.chunks_mut(n))
                {
                    let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > *eps {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for k in 0..n {
                            out[k] = (gr[k] - yr[k] * dot) / norm;
                        }
                    } else {
                        for k in 0..n {
                            out[k] = gr[k] / eps;
                        }
                    }
                }
                vec![(*x, gx)]
            }
            Op::MaxLast(x) => {
                let xt = val(*x);
                let n = *xt.shape().last().expect("rank >= 1");
                let mut gx = vec![0.0; xt.numel()];
                for (r, row) in xt.data().chunks(n).enumerate() {
                    let (arg, _) =
                        row.iter()
                            .enumerate()
                            .fold(
                                (0, f64::NEG_INFINITY),
                                |acc, (i, &v)| {
                                    if v > acc.1 {
                                        (i, v)
                                    } else {
                                        acc
                                    }
                                },
                            );
                    gx[r * n + arg] = gd[r];
                }
                vec![(*x, gx)]
            }
            Op::Sum(x) => vec![(*x, vec![gd[0]; val(*x).numel()])],
            Op::Mean(x) => {
                let n = val(*x).numel();
                vec![(*x, vec![gd[0] / n as f64; n])]
            }
            Op::WindowPartition(x, win) => {
                let (_, h, w) = val(*x).chw()?;
                vec![(*x, kernels::window_merge(g, *win, h, w)?.into_data())]
            }
            Op::WindowMerge(x, win) => {
                vec![(*x, kernels::window_partition(g, *win)?.into_data())]
            }
            Op::PadReflect(x) => {
                let (_, h, w) = val(*x).chw()?;
                vec![(*x, kernels::pad_reflect_backward(g, h, w)?)]
            }
            Op::Crop(x) => {
                let (c, hi, wi) = val(*x).chw()?;
                let (_, h, w) = g.chw()?;
                let mut full = vec![0.0; c * hi * wi];
                for ch in 0..c {
                    for yy in 0..h {
                        let src = (ch * h + yy) * w;
                        let dst = (ch * hi + yy) * wi;
                        full[dst..dst + w].copy_from_slice(&gd[src..src + w]);
                    }
                }
                vec![(*x, full)]
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap());
        let l = g.sum(x);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn sum_of_squares_gradient_is_2x() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap());
        let sq = g.mul(x, x).unwrap();
        let l = g.sum(sq);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(x), Err(Error::Usage(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::full(&[2], 2.0));
        let c = g.constant(Tensor::full(&[2], 3.0));
        let p = g.mul(x, c).unwrap();
        let l = g.sum(p);
        let grads = g.backward(l).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().data(), &[3.0, 3.0]);
    }
}
