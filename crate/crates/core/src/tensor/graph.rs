use std::sync::atomic::{AtomicU64, Ordering};

use super::{ensure_finite, gemm, Result, Tensor, TensorError};

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    graph: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { input: Var, kernel: Var, bias: Var },
    Relu(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Mse(Var, Var),
    Sum(Var),
    Matmul(Var, Var),
    AddBias(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Reshape(Var),
    Index(Var, usize),
    Stack(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Tape of executed operations.
///
/// Nodes are appended in execution order, so the tape is always
/// topologically sorted and `backward` is a single reverse sweep.
#[derive(Debug)]
pub struct Graph {
    id: u64,
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
    relu_margin: f64,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
            relu_margin: f64::INFINITY,
        }
    }

    /// Number of recorded nodes, leaves included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[self.check(var).expect("foreign variable")].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[self.check(var).expect("foreign variable")].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `var`.
    ///
    /// `None` before `backward` or for variables that do not require grad.
    /// A variable that requires grad but does not influence the loss gets zeros.
    pub fn grad(&self, var: Var) -> Option<Tensor> {
        let index = self.check(var).ok()?;
        if !self.backward_done || !self.nodes[index].requires_grad {
            return None;
        }
        let shape = self.nodes[index].value.shape().to_vec();
        let data = match &self.grads[index] {
            Some(g) => g.clone(),
            None => vec![0.0; self.nodes[index].value.len()],
        };
        Some(Tensor::new(shape, data).expect("gradient shape"))
    }

    /// Smallest nonzero absolute rectifier input seen so far. Finite-difference checks
    /// are only meaningful when this exceeds the perturbation scale.
    pub fn relu_margin(&self) -> f64 {
        self.relu_margin
    }

    /// Clears gradients so `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn check(&self, var: Var) -> Result<usize> {
        if var.graph != self.id || var.index >= self.nodes.len() {
            return Err(TensorError::ForeignVar);
        }
        Ok(var.index)
    }

    fn node(&self, var: Var) -> Result<&Node> {
        Ok(&self.nodes[self.check(var)?])
    }

    fn record(&mut self, op_name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        ensure_finite(op_name, value.data())?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.index].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    /// Same-padded 2-D convolution of a `C×H×W` input with an `O×C×K×K` kernel.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let x = &self.node(input)?.value;
        let k = &self.node(kernel)?.value;
        let b = &self.node(bias)?.value;
        let geom = ConvGeometry::new(x.shape(), k.shape(), b.shape())?;
        let value = conv2d_forward(&geom, x.data(), k.data(), b.data());
        self.record(
            "conv2d",
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
            },
            &[input, kernel, bias],
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xv = &self.node(x)?.value;
        // Exact zeros usually come from an upstream rectifier and stay zero
        // under small perturbations, so they do not count.
        let margin = xv
            .data()
            .iter()
            .filter(|v| **v != 0.0)
            .fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let data = xv.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.relu_margin = self.relu_margin.min(margin);
        self.record("relu", value, Op::Relu(x), &[x])
    }

    /// Elementwise sum; either operand may be a one-element tensor.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("add", a, b, |x, y| x + y)?;
        self.record("add", value, Op::Add(a, b), &[a, b])
    }

    /// Elementwise product; either operand may be a one-element tensor.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("mul", a, b, |x, y| x * y)?;
        self.record("mul", value, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let av = &self.node(a)?.value;
        let data = av.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.record("scale", value, Op::Scale(a, factor), &[a])
    }

    /// Mean of squared differences. Multiply by the element count to recover
    /// the squared L2 norm.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let p = &self.node(pred)?.value;
        let t = &self.node(target)?.value;
        same_shape("mse_loss", p.shape(), t.shape())?;
        let sum: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let value = Tensor::scalar(sum / p.len() as f64);
        self.record("mse_loss", value, Op::Mse(pred, target), &[pred, target])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.node(x)?.value.data().iter().sum());
        self.record("sum", value, Op::Sum(x), &[x])
    }

    /// `[m×k]·[k×n]` matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let av = &self.node(a)?.value;
        let bv = &self.node(b)?.value;
        let (m, k) = matrix_dims("matmul", av.shape())?;
        let (k2, n) = matrix_dims("matmul", bv.shape())?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                dim: "inner dimension".into(),
                expected: k,
                found: k2,
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, &mut out, false);
        let value = Tensor::new(vec![m, n], out)?;
        self.record("matmul", value, Op::Matmul(a, b), &[a, b])
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xv = &self.node(x)?.value;
        let bv = &self.node(bias)?.value;
        let (_, n) = matrix_dims("add_bias", xv.shape())?;
        if bv.shape() != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                dim: "bias length".into(),
                expected: n,
                found: bv.len(),
            });
        }
        let data = xv
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(bv.data()).map(|(a, b)| a + b))
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.record("add_bias", value, Op::AddBias(x, bias), &[x, bias])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.unary(x, sigmoid)?;
        self.record("sigmoid", value, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let value = self.unary(x, f64::tanh)?;
        self.record("tanh", value, Op::Tanh(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.node(x)?.value.reshape(shape)?;
        self.record("reshape", value, Op::Reshape(x), &[x])
    }

    /// One element of `x` as a one-element tensor.
    pub fn index(&mut self, x: Var, i: usize) -> Result<Var> {
        let xv = &self.node(x)?.value;
        let v = *xv.data().get(i).ok_or(TensorError::OutOfRange {
            op: "index",
            index: i,
            len: xv.len(),
        })?;
        self.record("index", Tensor::scalar(v), Op::Index(x, i), &[x])
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(TensorError::OutOfRange {
            op: "stack",
            index: 0,
            len: 0,
        })?;
        let shape = self.node(*first)?.value.shape().to_vec();
        let mut data = Vec::with_capacity(parts.len() * self.node(*first)?.value.len());
        for &p in parts {
            let v = &self.node(p)?.value;
            same_shape("stack", &shape, v.shape())?;
            data.extend_from_slice(v.data());
        }
        let mut out_shape = vec![parts.len()];
        out_shape.extend_from_slice(&shape);
        let value = Tensor::new(out_shape, data)?;
        self.record("stack", value, Op::Stack(parts.to_vec()), parts)
    }

    fn unary(&self, x: Var, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let xv = &self.node(x)?.value;
        Tensor::new(xv.shape().to_vec(), xv.data().iter().map(|&v| f(v)).collect())
    }

    fn binary(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let av = &self.node(a)?.value;
        let bv = &self.node(b)?.value;
        if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(av.shape().to_vec(), data)
        } else if bv.is_scalar() {
            let y = bv.item();
            Tensor::new(av.shape().to_vec(), av.data().iter().map(|&x| f(x, y)).collect())
        } else if av.is_scalar() {
            let x = av.item();
            Tensor::new(bv.shape().to_vec(), bv.data().iter().map(|&y| f(x, y)).collect())
        } else {
            same_shape(op, av.shape(), bv.shape()).map(|_| unreachable!())
        }
    }

    /// Back-propagates from a scalar `loss` through the whole tape.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let root = self.check(loss)?;
        if self.backward_done {
            return Err(TensorError::BackwardTwice);
        }
        if !self.nodes[root].value.is_scalar() {
            return Err(TensorError::NonScalarLoss(self.nodes[root].value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root] = Some(vec![1.0]);
        for index in (0..=root).rev() {
            if !self.nodes[index].requires_grad {
                continue;
            }
            let Some(upstream) = grads[index].take() else {
                continue;
            };
            self.propagate(index, &upstream, &mut grads);
            grads[index] = Some(upstream);
        }
        self.grads = grads;
        self.backward_done = true;
        Ok(())
    }

    fn propagate(&self, index: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let value = &self.nodes[index].value;
        match self.nodes[index].op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
            } => {
                let x = &self.nodes[input.index].value;
                let k = &self.nodes[kernel.index].value;
                let b = &self.nodes[bias.index].value;
                let geom = ConvGeometry::new(x.shape(), k.shape(), b.shape()).expect("recorded conv");
                if self.wants(bias) {
                    let db: Vec<f64> = g.chunks(geom.pixels()).map(|row| row.iter().sum()).collect();
                    accumulate(grads, bias.index, &db);
                }
                let want_k = self.wants(kernel);
                let want_x = self.wants(input);
                if want_k {
                    let cols = im2col(&geom, x.data());
                    let mut dk = vec![0.0; k.len()];
                    gemm(geom.out_channels, geom.pixels(), geom.patch(), g, false, &cols, true, &mut dk, false);
                    accumulate(grads, kernel.index, &dk);
                }
                if want_x {
                    let mut dcols = vec![0.0; geom.patch() * geom.pixels()];
                    gemm(geom.patch(), geom.out_channels, geom.pixels(), k.data(), true, g, false, &mut dcols, false);
                    let dx = col2im(&geom, &dcols);
                    accumulate(grads, input.index, &dx);
                }
            }
            Op::Relu(x) => {
                if self.wants(x) {
                    let xv = self.nodes[x.index].value.data();
                    let dx: Vec<f64> = g
                        .iter()
                        .zip(xv)
                        .map(|(&gi, &v)| if v > 0.0 { gi } else { 0.0 })
                        .collect();
                    accumulate(grads, x.index, &dx);
                }
            }
            Op::Add(a, b) => {
                for operand in [a, b] {
                    if self.wants(operand) {
                        let d = reduce_to(&self.nodes[operand.index].value, g.to_vec());
                        accumulate(grads, operand.index, &d);
                    }
                }
            }
            Op::Mul(a, b) => {
                let av = &self.nodes[a.index].value;
                let bv = &self.nodes[b.index].value;
                if self.wants(a) {
                    let d = reduce_to(av, broadcast_mul(g, bv));
                    accumulate(grads, a.index, &d);
                }
                if self.wants(b) {
                    let d = reduce_to(bv, broadcast_mul(g, av));
                    accumulate(grads, b.index, &d);
                }
            }
            Op::Scale(a, factor) => {
                if self.wants(a) {
                    let d: Vec<f64> = g.iter().map(|v| v * factor).collect();
                    accumulate(grads, a.index, &d);
                }
            }
            Op::Mse(p, t) => {
                let pv = self.nodes[p.index].value.data();
                let tv = self.nodes[t.index].value.data();
                let coef = 2.0 * g[0] / pv.len() as f64;
                let diff: Vec<f64> = pv.iter().zip(tv).map(|(a, b)| coef * (a - b)).collect();
                if self.wants(p) {
                    accumulate(grads, p.index, &diff);
                }
                if self.wants(t) {
                    let neg: Vec<f64> = diff.iter().map(|v| -v).collect();
                    accumulate(grads, t.index, &neg);
                }
            }
            Op::Sum(x) => {
                if self.wants(x) {
                    let d = vec![g[0]; self.nodes[x.index].value.len()];
                    accumulate(grads, x.index, &d);
                }
            }
            Op::Matmul(a, b) => {
                let av = &self.nodes[a.index].value;
                let bv = &self.nodes[b.index].value;
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if self.wants(a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g, false, bv.data(), true, &mut da, false);
                    accumulate(grads, a.index, &da);
                }
                if self.wants(b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, av.data(), true, g, false, &mut db, false);
                    accumulate(grads, b.index, &db);
                }
            }
            Op::AddBias(x, bias) => {
                if self.wants(x) {
                    accumulate(grads, x.index, g);
                }
                if self.wants(bias) {
                    let n = self.nodes[bias.index].value.len();
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(grads, bias.index, &db);
                }
            }
            Op::Sigmoid(x) => {
                if self.wants(x) {
                    let d: Vec<f64> = g
                        .iter()
                        .zip(value.data())
                        .map(|(gi, s)| gi * s * (1.0 - s))
                        .collect();
                    accumulate(grads, x.index, &d);
                }
            }
            Op::Tanh(x) => {
                if self.wants(x) {
                    let d: Vec<f64> = g
                        .iter()
                        .zip(value.data())
                        .map(|(gi, t)| gi * (1.0 - t * t))
                        .collect();
                    accumulate(grads, x.index, &d);
                }
            }
            Op::Reshape(x) => {
                if self.wants(x) {
                    accumulate(grads, x.index, g);
                }
            }
            Op::Index(x, i) => {
                if self.wants(x) {
                    let mut d = vec![0.0; self.nodes[x.index].value.len()];
                    d[i] = g[0];
                    accumulate(grads, x.index, &d);
                }
            }
            Op::Stack(ref parts) => {
                let chunk = g.len() / parts.len();
                for (p, gp) in parts.iter().zip(g.chunks(chunk)) {
                    if self.wants(*p) {
                        accumulate(grads, p.index, gp);
                    }
                }
            }
        }
    }

    fn wants(&self, var: Var) -> bool {
        self.nodes[var.index].requires_grad
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], index: usize, delta: &[f64]) {
    match &mut grads[index] {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(delta) {
                *e += d;
            }
        }
        slot @ None => *slot = Some(delta.to_vec()),
    }
}

/// Multiplies an upstream gradient by the other operand, broadcasting scalars.
fn broadcast_mul(g: &[f64], other: &Tensor) -> Vec<f64> {
    if other.is_scalar() {
        let s = other.item();
        g.iter().map(|v| v * s).collect()
    } else {
        g.iter().zip(other.data()).map(|(a, b)| a * b).collect()
    }
}

/// Sums a full-size gradient down to a scalar operand when it was broadcast.
fn reduce_to(target: &Tensor, grad: Vec<f64>) -> Vec<f64> {
    if target.len() == grad.len() {
        grad
    } else {
        vec![grad.iter().sum()]
    }
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(TensorError::RankMismatch {
            op,
            expected: a.len(),
            found: b.to_vec(),
        });
    }
    for (axis, (x, y)) in a.iter().zip(b).enumerate() {
        if x != y {
            return Err(TensorError::ShapeMismatch {
                op,
                dim: format!("axis {axis}"),
                expected: *x,
                found: *y,
            });
        }
    }
    Ok(())
}

fn matrix_dims(op: &'static str, shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [m, n] => Ok((*m, *n)),
        _ => Err(TensorError::RankMismatch {
            op,
            expected: 2,
            found: shape.to_vec(),
        }),
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvGeometry {
    in_channels: usize,
    out_channels: usize,
    height: usize,
    width: usize,
    size: usize,
}

impl ConvGeometry {
    fn new(x: &[usize], k: &[usize], b: &[usize]) -> Result<Self> {
        let [c, h, w] = *x else {
            return Err(TensorError::RankMismatch {
                op: "conv2d",
                expected: 3,
                found: x.to_vec(),
            });
        };
        let [o, kc, kh, kw] = *k else {
            return Err(TensorError::RankMismatch {
                op: "conv2d",
                expected: 4,
                found: k.to_vec(),
            });
        };
        let mismatch = |dim: &str, expected, found| TensorError::ShapeMismatch {
            op: "conv2d",
            dim: dim.to_string(),
            expected,
            found,
        };
        if kc != c {
            return Err(mismatch("kernel input channels", c, kc));
        }
        if kw != kh {
            return Err(mismatch("kernel width", kh, kw));
        }
        if kh % 2 == 0 {
            return Err(TensorError::EvenKernel(kh));
        }
        if b != [o] {
            return Err(mismatch("bias length", o, b.iter().product()));
        }
        Ok(ConvGeometry {
            in_channels: c,
            out_channels: o,
            height: h,
            width: w,
            size: kh,
        })
    }

    fn pixels(&self) -> usize {
        self.height * self.width
    }

    fn patch(&self) -> usize {
        self.in_channels * self.size * self.size
    }

    /// Yields `(row, dx_lo, dx_hi, shift_x, shift_y)` for each kernel tap:
    /// the valid output x-range and the input offset for zero padding.
    fn taps(&self) -> impl Iterator<Item = (usize, usize, usize, isize, isize)> + '_ {
        let pad = (self.size / 2) as isize;
        let w = self.width as isize;
        (0..self.in_channels).flat_map(move |c| {
            (0..self.size).flat_map(move |i| {
                (0..self.size).map(move |j| {
                    let row = (c * self.size + i) * self.size + j;
                    let sx = j as isize - pad;
                    let sy = i as isize - pad;
                    let lo = (-sx).clamp(0, w) as usize;
                    let hi = (w - sx).clamp(0, w) as usize;
                    (row, lo, hi, sx, sy)
                })
            })
        })
    }
}

fn im2col(geom: &ConvGeometry, x: &[f64]) -> Vec<f64> {
    let (h, w) = (geom.height, geom.width);
    let hw = geom.pixels();
    let kk = geom.size * geom.size;
    let mut cols = vec![0.0; geom.patch() * hw];
    for (row, lo, hi, sx, sy) in geom.taps() {
        if lo >= hi {
            continue;
        }
        let c = row / kk;
        let dst = &mut cols[row * hw..(row + 1) * hw];
        for y in 0..h {
            let iy = y as isize + sy;
            if iy < 0 || iy >= h as isize {
                continue;
            }
            let src = c * hw + iy as usize * w;
            let start = (lo as isize + sx) as usize;
            dst[y * w + lo..y * w + hi].copy_from_slice(&x[src + start..src + start + (hi - lo)]);
        }
    }
    cols
}

fn col2im(geom: &ConvGeometry, cols: &[f64]) -> Vec<f64> {
    let (h, w) = (geom.height, geom.width);
    let hw = geom.pixels();
    let kk = geom.size * geom.size;
    let mut x = vec![0.0; geom.in_channels * hw];
    for (row, lo, hi, sx, sy) in geom.taps() {
        if lo >= hi {
            continue;
        }
        let c = row / kk;
        let src = &cols[row * hw..(row + 1) * hw];
        for y in 0..h {
            let iy = y as isize + sy;
            if iy < 0 || iy >= h as isize {
                continue;
            }
            let dst = c * hw + iy as usize * w;
            let start = (lo as isize + sx) as usize;
            for (d, s) in x[dst + start..dst + start + (hi - lo)]
                .iter_mut()
                .zip(&src[y * w + lo..y * w + hi])
            {
                *d += s;
            }
        }
    }
    x
}

fn conv2d_forward(geom: &ConvGeometry, x: &[f64], k: &[f64], b: &[f64]) -> Tensor {
    let hw = geom.pixels();
    let cols = im2col(geom, x);
    let mut out = vec![0.0; geom.out_channels * hw];
    for (row, &bias) in out.chunks_mut(hw).zip(b) {
        row.fill(bias);
    }
    gemm(geom.out_channels, geom.patch(), hw, k, false, &cols, false, &mut out, true);
    Tensor::new(vec![geom.out_channels, geom.height, geom.width], out).expect("conv output shape")
}
