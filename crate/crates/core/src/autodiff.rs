//! Reverse-mode automatic differentiation on f64 tensors.
//!
//! A [`Tape`] is a define-by-run Wengert list: every operation appends a
//! node holding its value and enough context to propagate adjoints. Graphs
//! are cheap, single-threaded, and built per example; batch parallelism
//! happens across graphs with a fixed-order reduction, so results never
//! depend on thread scheduling.
//!
//! The op set is exactly what the model and its objectives need: dense and
//! convolutional layers, pooling, pointwise nonlinearities, the scalar math
//! of the pairwise likelihood (normal CDF, log-sum-exp), and the gradient
//! reversal layer (identity forward, `-scale` backward).

use serde::{Deserialize, Serialize};

/// Dense row-major tensor of f64 values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data mismatch"
        );
        Tensor { shape, data }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }
}

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    AddConst(Var, f64),
    MulConst(Var, f64),
    SubFromConst(f64, Var),
    PowConst(Var, f64),
    Ln(Var),
    Exp(Var),
    Sqrt(Var),
    Sigmoid(Var),
    Softplus(Var),
    Clamp(Var, f64, f64),
    NormalCdf(Var),
    LogSumExp2(Var, Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    MeanN(Vec<Var>),
    SumElems(Var),
    Index(Var, usize),
    Concat(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    },
    MaxPool2d {
        x: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool(Var),
    GradReverse(Var, f64),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Standard normal CDF built so that `phi(z) + phi(-z) == 1` exactly in f64:
/// negative arguments evaluate as `1 - phi(-z)`, and `1 - x` is exact for
/// `x` in `[0.5, 1]`.
pub fn normal_cdf(z: f64) -> f64 {
    if z < 0.0 {
        1.0 - normal_cdf_nonneg(-z)
    } else {
        normal_cdf_nonneg(z)
    }
}

fn normal_cdf_nonneg(z: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(z / std::f64::consts::SQRT_2))
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads[var.0].as_ref()
    }
}

/// The computation tape.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.leaf(Tensor::scalar(v))
    }

    fn binary_elementwise(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape, tb.shape, "elementwise shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape.clone();
        self.push(Tensor::new(shape, data), op)
    }

    fn unary_elementwise(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta.data.iter().map(|&x| f(x)).collect();
        let shape = ta.shape.clone();
        self.push(Tensor::new(shape, data), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_elementwise(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_elementwise(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_elementwise(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary_elementwise(a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, |x| -x, Op::Neg(a))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.unary_elementwise(a, |x| x + c, Op::AddConst(a, c))
    }

    pub fn mul_const(&mut self, a: Var, c: f64) -> Var {
        self.unary_elementwise(a, |x| x * c, Op::MulConst(a, c))
    }

    /// `c - x`, the usual way to form `1 - p`.
    pub fn sub_from_const(&mut self, c: f64, a: Var) -> Var {
        self.unary_elementwise(a, |x| c - x, Op::SubFromConst(c, a))
    }

    pub fn pow_const(&mut self, a: Var, c: f64) -> Var {
        self.unary_elementwise(a, |x| x.powf(c), Op::PowConst(a, c))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, f64::ln, Op::Ln(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, f64::exp, Op::Exp(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, softplus, Op::Softplus(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary_elementwise(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn normal_cdf(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, normal_cdf, Op::NormalCdf(a))
    }

    /// `ln(exp(a) + exp(b))`, evaluated stably.
    pub fn log_sum_exp2(&mut self, a: Var, b: Var) -> Var {
        self.binary_elementwise(
            a,
            b,
            |x, y| {
                let m = x.max(y);
                m + ((x - m).exp() + (y - m).exp()).ln()
            },
            Op::LogSumExp2(a, b),
        )
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary_elementwise(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary_elementwise(
            a,
            |x| if x >= 0.0 { x } else { slope * x },
            Op::LeakyRelu(a, slope),
        )
    }

    /// Elementwise mean of same-shape tensors.
    pub fn mean_n(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty(), "mean of no tensors");
        let shape = self.nodes[vars[0].0].value.shape.clone();
        let mut data = vec![0.0; shape.iter().product()];
        for &v in vars {
            let t = &self.nodes[v.0].value;
            assert_eq!(t.shape, shape, "mean_n shape mismatch");
            for (d, &x) in data.iter_mut().zip(&t.data) {
                *d += x;
            }
        }
        let n = vars.len() as f64;
        for d in &mut data {
            *d /= n;
        }
        self.push(Tensor::new(shape, data), Op::MeanN(vars.to_vec()))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum_elems(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].value.data.iter().sum();
        self.push(Tensor::scalar(s), Op::SumElems(a))
    }

    /// Extracts element `i` as a scalar.
    pub fn index(&mut self, a: Var, i: usize) -> Var {
        let v = self.nodes[a.0].value.data[i];
        self.push(Tensor::scalar(v), Op::Index(a, i))
    }

    /// Concatenates two vectors.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape.len(), 1, "concat expects vectors");
        assert_eq!(tb.shape.len(), 1, "concat expects vectors");
        let mut data = ta.data.clone();
        data.extend_from_slice(&tb.data);
        self.push(Tensor::vector(data), Op::Concat(a, b))
    }

    /// Dense layer: `y = W x + b` with `W: [out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (tx, tw, tb) = (
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
        );
        assert_eq!(tw.shape.len(), 2, "linear weight must be 2-D");
        let (out_dim, in_dim) = (tw.shape[0], tw.shape[1]);
        assert_eq!(tx.data.len(), in_dim, "linear input dim mismatch");
        assert_eq!(tb.data.len(), out_dim, "linear bias dim mismatch");
        let mut data = tb.data.clone();
        for (i, out) in data.iter_mut().enumerate() {
            let row = &tw.data[i * in_dim..(i + 1) * in_dim];
            *out += row.iter().zip(&tx.data).map(|(&a, &b)| a * b).sum::<f64>();
        }
        self.push(Tensor::vector(data), Op::Linear { x, w, b })
    }

    /// 2-D convolution on a `[C, H, W]` tensor with weights `[O, C, K, K]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (tx, tw, tb) = (
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
        );
        assert_eq!(tx.shape.len(), 3, "conv input must be [C,H,W]");
        assert_eq!(tw.shape.len(), 4, "conv weight must be [O,C,K,K]");
        let (c_in, h, wd) = (tx.shape[0], tx.shape[1], tx.shape[2]);
        let (c_out, wc, kh, kw) = (tw.shape[0], tw.shape[1], tw.shape[2], tw.shape[3]);
        assert_eq!(c_in, wc, "conv channel mismatch");
        assert_eq!(kh, kw, "conv kernels are square");
        assert_eq!(tb.data.len(), c_out, "conv bias mismatch");
        let k = kh;
        assert!(h + 2 * pad >= k && wd + 2 * pad >= k, "conv input too small");
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0f64; c_out * oh * ow];
        for o in 0..c_out {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            let bias = tb.data[o];
            for v in plane.iter_mut() {
                *v = bias;
            }
            for c in 0..c_in {
                let x_plane = &tx.data[c * h * wd..(c + 1) * h * wd];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = tw.data[((o * c_in + c) * k + ky) * k + kx];
                        for oy in 0..oh {
                            let iy = (oy * stride + ky) as i64 - pad as i64;
                            if iy < 0 || iy >= h as i64 {
                                continue;
                            }
                            let x_row = &x_plane[iy as usize * wd..(iy as usize + 1) * wd];
                            let out_row = &mut plane[oy * ow..(oy + 1) * ow];
                            let (ox_lo, ox_hi) = conv_ox_range(kx, pad, stride, wd, ow);
                            for ox in ox_lo..ox_hi {
                                out_row[ox] += wv * x_row[ox * stride + kx - pad];
                            }
                        }
                    }
                }
            }
        }
        self.push(
            Tensor::new(vec![c_out, oh, ow], out),
            Op::Conv2d { x, w, b, stride, pad },
        )
    }

    /// Max pooling with square window `k` and the given stride (no padding).
    /// Ties resolve to the first element in scan order.
    pub fn max_pool2d(&mut self, x: Var, k: usize, stride: usize) -> Var {
        let tx = &self.nodes[x.0].value;
        assert_eq!(tx.shape.len(), 3, "pool input must be [C,H,W]");
        let (c, h, w) = (tx.shape[0], tx.shape[1], tx.shape[2]);
        assert!(h >= k && w >= k, "pool window larger than input");
        let oh = (h - k) / stride + 1;
        let ow = (w - k) / stride + 1;
        let mut out = vec![0.0f64; c * oh * ow];
        let mut argmax = vec![0usize; c * oh * ow];
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for ky in 0..k {
                        for kx in 0..k {
                            let idx = ci * h * w + (oy * stride + ky) * w + ox * stride + kx;
                            if tx.data[idx] > best {
                                best = tx.data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let oi = ci * oh * ow + oy * ow + ox;
                    out[oi] = best;
                    argmax[oi] = best_idx;
                }
            }
        }
        self.push(Tensor::new(vec![c, oh, ow], out), Op::MaxPool2d { x, argmax })
    }

    /// Mean over the spatial dimensions: `[C, H, W] -> [C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let tx = &self.nodes[x.0].value;
        assert_eq!(tx.shape.len(), 3, "pool input must be [C,H,W]");
        let (c, h, w) = (tx.shape[0], tx.shape[1], tx.shape[2]);
        let inv = 1.0 / (h * w) as f64;
        let data = (0..c)
            .map(|ci| tx.data[ci * h * w..(ci + 1) * h * w].iter().sum::<f64>() * inv)
            .collect();
        self.push(Tensor::vector(data), Op::GlobalAvgPool(x))
    }

    /// Gradient reversal: identity forward, `-scale` times the adjoint
    /// backward.
    pub fn grad_reverse(&mut self, x: Var, scale: f64) -> Var {
        let value = self.nodes[x.0].value.clone();
        self.push(value, Op::GradReverse(x, scale))
    }

    /// Reverse pass from a scalar loss. Returns one adjoint per reachable
    /// node; leaves hold the gradients callers care about.
    pub fn backward(&mut self, loss: Var) -> Gradients {
        assert_eq!(
            self.nodes[loss.0].value.data.len(),
            1,
            "backward requires a scalar loss"
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..self.nodes.len()).rev() {
            if grads[i].is_none() {
                continue;
            }
            // Parents always precede children on the tape, so split the
            // adjoint buffer at the current node to borrow both sides. The
            // node's own adjoint is taken out for the duration and restored
            // afterwards so callers can still query it.
            let (parent_grads, rest) = grads.split_at_mut(i);
            let g = rest[0].take().unwrap();
            let node = &self.nodes[i];
            let nodes = &self.nodes;
            let mut accum = |var: Var, f: &mut dyn FnMut(&mut [f64])| {
                let slot = &mut parent_grads[var.0];
                if slot.is_none() {
                    *slot = Some(Tensor::zeros(nodes[var.0].value.shape.clone()));
                }
                f(&mut slot.as_mut().unwrap().data);
            };
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accum(*a, &mut |buf| add_into(buf, &g.data));
                    accum(*b, &mut |buf| add_into(buf, &g.data));
                }
                Op::Sub(a, b) => {
                    accum(*a, &mut |buf| add_into(buf, &g.data));
                    accum(*b, &mut |buf| sub_into(buf, &g.data));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&nodes[a.0].value.data, &nodes[b.0].value.data);
                    accum(*a, &mut |buf| {
                        for ((o, &gi), &bv) in buf.iter_mut().zip(&g.data).zip(vb) {
                            *o += gi * bv;
                        }
                    });
                    accum(*b, &mut |buf| {
                        for ((o, &gi), &av) in buf.iter_mut().zip(&g.data).zip(va) {
                            *o += gi * av;
                        }
                    });
                }
                Op::Div(a, b) => {
                    let (va, vb) = (&nodes[a.0].value.data, &nodes[b.0].value.data);
                    accum(*a, &mut |buf| {
                        for ((o, &gi), &bv) in buf.iter_mut().zip(&g.data).zip(vb) {
                            *o += gi / bv;
                        }
                    });
                    accum(*b, &mut |buf| {
                        for (((o, &gi), &av), &bv) in buf.iter_mut().zip(&g.data).zip(va).zip(vb) {
                            *o -= gi * av / (bv * bv);
                        }
                    });
                }
                Op::Neg(a) => accum(*a, &mut |buf| sub_into(buf, &g.data)),
                Op::AddConst(a, _) => accum(*a, &mut |buf| add_into(buf, &g.data)),
                Op::MulConst(a, c) => {
                    let c = *c;
                    accum(*a, &mut |buf| {
                        for (o, &gi) in buf.iter_mut().zip(&g.data) {
                            *o += gi * c;
                        }
                    });
                }
                Op::SubFromConst(_, a) => accum(*a, &mut |buf| sub_into(buf, &g.data)),
                Op::PowConst(a, c) => {
                    let c = *c;
                    let va = &nodes[a.0].value.data;
                    accum(*a, &mut |buf| {
                        if c == 0.0 {
                            return; // x^0 is constant
                        }
                        for ((o, &gi), &x) in buf.iter_mut().zip(&g.data).zip(va) {
                            *o += gi * c * x.powf(c - 1.0);
                        }
                    });
                }
                Op::Ln(a) => {
                    let va = &nodes[a.0].value.data;
                    accum(*a, &mut |buf| {
                        for ((o, &gi), &x) in buf.iter_mut().zip(&g.data).zip(va) {
                            *o += gi / x;
                        }
                    });
                }
                Op::Exp(a) => {
                    let out = &node.value.data;
                    accum(*a, &mut |buf| {
                        for ((o, &gi), &e) in buf.iter_mut().zip(&g.data).zip(out) {
                            *o += gi * e;
                        }
                    });
                }
                Op::Sqrt(a) => {
                    let out = &node.value.data;
                    accum(*a, &mut |buf| {
                        for ((o, &gi), &s) in buf.iter_mut().zip(&g.data).zip(out) {
                            *o += gi * 0.5 / s;
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let out = &node.value.data;
                    accum(*a, &mut |buf| {
                        for ((o, &gi), &s) in buf.iter_mut().zip(&g.data).zip(out) {
                            *o += gi * s * (1.0 - s);
                        }
                    });
                }
                Op::Softplus(a) => {
                    let va = &nodes[a.0].value.data;
                    accum(*a, &mut |buf| {
                        for ((o, &gi), &x) in buf.iter_mut().zip(&g.data).zip(va) {
                            *o += gi * sigmoid(x);
                        }
                    });
                }
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let va = &nodes[a.0].value.data;
                    accum(*a, &mut |buf| {
                        for ((o, &gi), &x) in buf.iter_mut().zip(&g.data).zip(va) {
                            if x >= lo && x <= hi {
                                *o += gi;
                            }
                        }
                    });
                }
                Op::NormalCdf(a) => {
                    let va = &nodes[a.0].value.data;
                    accum(*a, &mut |buf| {
                        for ((o, &gi), &z) in buf.iter_mut().zip(&g.data).zip(va) {
                            *o += gi * normal_pdf(z);
                        }
                    });
                }
                Op::LogSumExp2(a, b) => {
                    let (va, vb) = (&nodes[a.0].value.data, &nodes[b.0].value.data);
                    accum(*a, &mut |buf| {
                        for (((o, &gi), &x), &y) in buf.iter_mut().zip(&g.data).zip(va).zip(vb) {
                            *o += gi * sigmoid(x - y);
                        }
                    });
                    accum(*b, &mut |buf| {
                        for (((o, &gi), &x), &y) in buf.iter_mut().zip(&g.data).zip(va).zip(vb) {
                            *o += gi * sigmoid(y - x);
                        }
                    });
                }
                Op::Relu(a) => {
                    let va = &nodes[a.0].value.data;
                    accum(*a, &mut |buf| {
                        for ((o, &gi), &x) in buf.iter_mut().zip(&g.data).zip(va) {
                            if x > 0.0 {
                                *o += gi;
                            }
                        }
                    });
                }
                Op::LeakyRelu(a, slope) => {
                    let slope = *slope;
                    let va = &nodes[a.0].value.data;
                    accum(*a, &mut |buf| {
                        for ((o, &gi), &x) in buf.iter_mut().zip(&g.data).zip(va) {
                            *o += gi * if x >= 0.0 { 1.0 } else { slope };
                        }
                    });
                }
                Op::MeanN(vars) => {
                    let inv = 1.0 / vars.len() as f64;
                    for &v in vars {
                        accum(v, &mut |buf| {
                            for (o, &gi) in buf.iter_mut().zip(&g.data) {
                                *o += gi * inv;
                            }
                        });
                    }
                }
                Op::SumElems(a) => {
                    let gi = g.data[0];
                    accum(*a, &mut |buf| {
                        for o in buf.iter_mut() {
                            *o += gi;
                        }
                    });
                }
                Op::Index(a, idx) => {
                    let (idx, gi) = (*idx, g.data[0]);
                    accum(*a, &mut |buf| {
                        buf[idx] += gi;
                    });
                }
                Op::Concat(a, b) => {
                    let na = nodes[a.0].value.data.len();
                    accum(*a, &mut |buf| add_into(buf, &g.data[..na]));
                    accum(*b, &mut |buf| add_into(buf, &g.data[na..]));
                }
                Op::Linear { x, w, b } => {
                    let tw = &nodes[w.0].value;
                    let (out_dim, in_dim) = (tw.shape[0], tw.shape[1]);
                    let wdata = &tw.data;
                    let xdata = &nodes[x.0].value.data;
                    accum(*x, &mut |buf| {
                        for i in 0..out_dim {
                            let gi = g.data[i];
                            let row = &wdata[i * in_dim..(i + 1) * in_dim];
                            for (o, &wv) in buf.iter_mut().zip(row) {
                                *o += gi * wv;
                            }
                        }
                    });
                    accum(*w, &mut |buf| {
                        for i in 0..out_dim {
                            let gi = g.data[i];
                            let row = &mut buf[i * in_dim..(i + 1) * in_dim];
                            for (o, &xv) in row.iter_mut().zip(xdata) {
                                *o += gi * xv;
                            }
                        }
                    });
                    accum(*b, &mut |buf| add_into(buf, &g.data));
                }
                Op::Conv2d { x, w, b, stride, pad } => {
                    let (stride, pad) = (*stride, *pad);
                    let tx = &nodes[x.0].value;
                    let tw = &nodes[w.0].value;
                    let (c_in, h, wd) = (tx.shape[0], tx.shape[1], tx.shape[2]);
                    let (c_out, k) = (tw.shape[0], tw.shape[2]);
                    let (oh, ow) = (node.value.shape[1], node.value.shape[2]);
                    accum(*b, &mut |buf| {
                        for (o, bu) in buf.iter_mut().enumerate() {
                            *bu += g.data[o * oh * ow..(o + 1) * oh * ow].iter().sum::<f64>();
                        }
                    });
                    accum(*w, &mut |buf| {
                        for o in 0..c_out {
                            let g_plane = &g.data[o * oh * ow..(o + 1) * oh * ow];
                            for c in 0..c_in {
                                let x_plane = &tx.data[c * h * wd..(c + 1) * h * wd];
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let mut acc = 0.0;
                                        for oy in 0..oh {
                                            let iy = (oy * stride + ky) as i64 - pad as i64;
                                            if iy < 0 || iy >= h as i64 {
                                                continue;
                                            }
                                            let x_row =
                                                &x_plane[iy as usize * wd..(iy as usize + 1) * wd];
                                            let g_row = &g_plane[oy * ow..(oy + 1) * ow];
                                            let (ox_lo, ox_hi) =
                                                conv_ox_range(kx, pad, stride, wd, ow);
                                            for ox in ox_lo..ox_hi {
                                                acc += g_row[ox] * x_row[ox * stride + kx - pad];
                                            }
                                        }
                                        buf[((o * c_in + c) * k + ky) * k + kx] += acc;
                                    }
                                }
                            }
                        }
                    });
                    accum(*x, &mut |buf| {
                        for o in 0..c_out {
                            let g_plane = &g.data[o * oh * ow..(o + 1) * oh * ow];
                            for c in 0..c_in {
                                let x_grad = &mut buf[c * h * wd..(c + 1) * h * wd];
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let wv = tw.data[((o * c_in + c) * k + ky) * k + kx];
                                        if wv == 0.0 {
                                            continue;
                                        }
                                        for oy in 0..oh {
                                            let iy = (oy * stride + ky) as i64 - pad as i64;
                                            if iy < 0 || iy >= h as i64 {
                                                continue;
                                            }
                                            let g_row = &g_plane[oy * ow..(oy + 1) * ow];
                                            let (ox_lo, ox_hi) =
                                                conv_ox_range(kx, pad, stride, wd, ow);
                                            let base = iy as usize * wd;
                                            for ox in ox_lo..ox_hi {
                                                x_grad[base + ox * stride + kx - pad] +=
                                                    g_row[ox] * wv;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    });
                }
                Op::MaxPool2d { x, argmax } => {
                    accum(*x, &mut |buf| {
                        for (oi, &gi) in g.data.iter().enumerate() {
                            buf[argmax[oi]] += gi;
                        }
                    });
                }
                Op::GlobalAvgPool(a) => {
                    let ta = &nodes[a.0].value;
                    let (c, h, w) = (ta.shape[0], ta.shape[1], ta.shape[2]);
                    let inv = 1.0 / (h * w) as f64;
                    accum(*a, &mut |buf| {
                        for ci in 0..c {
                            let gi = g.data[ci] * inv;
                            for o in &mut buf[ci * h * w..(ci + 1) * h * w] {
                                *o += gi;
                            }
                        }
                    });
                }
                Op::GradReverse(a, scale) => {
                    let scale = *scale;
                    accum(*a, &mut |buf| {
                        for (o, &gi) in buf.iter_mut().zip(&g.data) {
                            *o -= scale * gi;
                        }
                    });
                }
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }
}

/// Valid `ox` range so that `ox*stride + kx - pad` stays inside `[0, wd)`.
#[inline]
fn conv_ox_range(kx: usize, pad: usize, stride: usize, wd: usize, ow: usize) -> (usize, usize) {
    let lo = if kx < pad {
        (pad - kx).div_ceil(stride)
    } else {
        0
    };
    let hi = ((wd + pad - kx - 1) / stride + 1).min(ow);
    (lo, hi.max(lo))
}

#[inline]
fn add_into(buf: &mut [f64], g: &[f64]) {
    for (o, &gi) in buf.iter_mut().zip(g) {
        *o += gi;
    }
}

#[inline]
fn sub_into(buf: &mut [f64], g: &[f64]) {
    for (o, &gi) in buf.iter_mut().zip(g) {
        *o -= gi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central finite-difference check of `build`'s gradients with respect
    /// to every leaf. `build` must construct the graph from scratch given
    /// the leaf values so perturbed evaluations replay every op.
    fn check_grad(leaf_values: &[Tensor], build: impl Fn(&mut Tape, &[Var]) -> Var, rel_tol: f64) {
        let eval = |values: &[Tensor]| -> f64 {
            let mut tape = Tape::new();
            let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
            let loss = build(&mut tape, &vars);
            tape.value(loss).item()
        };
        let mut tape = Tape::new();
        let vars: Vec<Var> = leaf_values.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars);
        let grads = tape.backward(loss);
        let h = 1e-5;
        for (li, leaf) in leaf_values.iter().enumerate() {
            let analytic = grads.get(vars[li]);
            for ei in 0..leaf.data.len() {
                let mut plus = leaf_values.to_vec();
                plus[li].data[ei] += h;
                let mut minus = leaf_values.to_vec();
                minus[li].data[ei] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let an = analytic.map(|t| t.data[ei]).unwrap_or(0.0);
                let denom = fd.abs().max(an.abs()).max(1e-8);
                assert!(
                    (fd - an).abs() / denom <= rel_tol,
                    "leaf {li} elem {ei}: analytic {an} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn scalar_math_gradients() {
        let leaves = vec![Tensor::scalar(0.7), Tensor::scalar(-0.3), Tensor::scalar(1.2)];
        check_grad(
            &leaves,
            |t, v| {
                let a = t.mul(v[0], v[1]);
                let b = t.sigmoid(v[2]);
                let c = t.log_sum_exp2(a, b);
                let d = t.normal_cdf(c);
                let e = t.softplus(d);
                let f = t.ln(e);
                let g = t.exp(f);
                let h2 = t.pow_const(g, 2.5);
                let i = t.sqrt(h2);
                let j = t.div(i, v[2]);
                let k = t.sub(j, v[1]);
                let l = t.add_const(k, 0.1);
                t.mul_const(l, 1.7)
            },
            1e-6,
        );
    }

    #[test]
    fn nn_op_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut rand_t = |shape: Vec<usize>| {
            let len = shape.iter().product();
            Tensor::new(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
        };
        // conv -> leaky_relu -> conv -> relu -> gap -> linear -> sum
        let leaves = vec![
            rand_t(vec![2, 7, 8]),    // x
            rand_t(vec![3, 2, 3, 3]), // w1
            rand_t(vec![3]),          // b1
            rand_t(vec![2, 3, 3, 3]), // w2
            rand_t(vec![2]),          // b2
            rand_t(vec![4, 2]),       // w3
            rand_t(vec![4]),          // b3
        ];
        check_grad(
            &leaves,
            |t, v| {
                let c1 = t.conv2d(v[0], v[1], v[2], 2, 1);
                let a1 = t.leaky_relu(c1, 0.01);
                let c2 = t.conv2d(a1, v[3], v[4], 1, 1);
                let a2 = t.relu(c2);
                let p = t.global_avg_pool(a2);
                let l = t.linear(p, v[5], v[6]);
                t.sum_elems(l)
            },
            1e-5,
        );
    }

    #[test]
    fn max_pool_and_concat_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::new(
            vec![2, 6, 6],
            (0..72).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let y = Tensor::vector((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect());
        check_grad(
            &[x, y],
            |t, v| {
                let p = t.max_pool2d(v[0], 2, 2);
                let gp = t.global_avg_pool(p);
                let cat = t.concat(gp, v[1]);
                let s = t.sum_elems(cat);
                t.pow_const(s, 2.0)
            },
            1e-5,
        );
    }

    #[test]
    fn grad_reverse_negates_and_scales() {
        // Framework gradient through the GRL must equal -scale times the
        // gradient of the same graph without it.
        let x = Tensor::vector(vec![0.3, -0.8, 0.5, 0.1]);
        let grad_with = |scale: Option<f64>| -> Vec<f64> {
            let mut tape = Tape::new();
            let v = tape.leaf(x.clone());
            let inner = match scale {
                Some(s) => tape.grad_reverse(v, s),
                None => v,
            };
            let s = tape.sigmoid(inner);
            let sum = tape.sum_elems(s);
            let loss = tape.pow_const(sum, 2.0);
            let grads = tape.backward(loss);
            grads.get(v).unwrap().data.clone()
        };
        let base = grad_with(None);
        let reversed = grad_with(Some(1.0));
        let scaled = grad_with(Some(2.5));
        let zeroed = grad_with(Some(0.0));
        for i in 0..base.len() {
            assert!((reversed[i] + base[i]).abs() < 1e-12);
            assert!((scaled[i] + 2.5 * base[i]).abs() < 1e-12);
            assert_eq!(zeroed[i], 0.0);
        }
    }

    #[test]
    fn grad_reverse_forward_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.5, -2.25, 0.0]));
        let y = tape.grad_reverse(x, 3.0);
        assert_eq!(tape.value(y).data, tape.value(x).data);
    }

    #[test]
    fn normal_cdf_symmetry_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let z: f64 = rng.gen_range(-6.0..6.0);
            let sum = normal_cdf(z) + normal_cdf(-z);
            assert_eq!(sum, 1.0, "phi({z}) + phi(-{z}) = {sum}");
        }
    }

    #[test]
    fn normal_cdf_reference_value() {
        assert!((normal_cdf(1.0) - 0.841_344_746_068_543).abs() < 1e-9);
    }

    #[test]
    fn mean_n_averages() {
        let mut tape = Tape::new();
        let a = tape.scalar(1.0);
        let b = tape.scalar(2.0);
        let c = tape.scalar(6.0);
        let m = tape.mean_n(&[a, b, c]);
        assert!((tape.value(m).item() - 3.0).abs() < 1e-15);
        let grads = tape.backward(m);
        assert!((grads.get(a).unwrap().item() - 1.0 / 3.0).abs() < 1e-15);
    }
}
