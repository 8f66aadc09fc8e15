//! Reverse-mode differentiation over whole tensors.
//!
//! A [`Graph`] records every primitive applied to its leaves. Values are
//! computed eagerly; [`Graph::backward`] walks the record in reverse and
//! accumulates adjoints. Leaves may borrow their tensors (parameters) or own
//! them (inputs and constants). Stochastic pieces such as dropout enter only
//! as precomputed constant masks, so a graph is a deterministic function of
//! its leaves.

use std::borrow::Cow;

use super::tensor::{log_softmax_in_place, softmax_in_place};
use super::{ParamGrads, ParamSet, Tensor};
use crate::error::{Error, Result};

const LAYERNORM_EPS: f64 = 1e-5;
const GELU_C: f32 = 0.797_884_6; // sqrt(2/pi)
const GELU_A: f32 = 0.044_715;

// tanh through a single exp; libm's tanhf dominated encoder profiles
fn fast_tanh(u: f32) -> f32 {
    let u = u.clamp(-15.0, 15.0);
    1.0 - 2.0 / (1.0 + (2.0 * u).exp())
}

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor),
    Scale(Var, f32),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        inv_std: Vec<f32>,
    },
    Gelu(Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    MeanRows(Var),
    ConcatRows(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Log(Var),
    Exp(Var),
    Cosine {
        x: Var,
        normed: Tensor,
        norms: Vec<f32>,
    },
    SumRows(Var),
    SumAll(Var),
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Adjoints produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Differentiable leaf borrowing `t` (typically a parameter).
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf owning `t`.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Binds every entry of `params` as a borrowed leaf, in set order.
    pub fn bind(&mut self, params: &'a ParamSet) -> Vec<Var> {
        params.tensors().map(|t| self.param(t)).collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::Transpose(a), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    /// Adds a length-`d` vector to every row of an `[n x d]` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        let (_, d) = x.expect_matrix("add_row")?;
        if b.numel() != d {
            return Err(Error::dim(format!(
                "add_row: bias of {} values for rows of width {d}",
                b.numel()
            )));
        }
        let mut out = x.data().to_vec();
        for row in out.chunks_mut(d) {
            for (o, &bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        let out = Tensor::new(x.shape().to_vec(), out)?;
        let ng = self.ng(a) || self.ng(bias);
        Ok(self.push(out, Op::AddRow(a, bias), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    /// Elementwise product with a constant tensor (dropout masks, selectors).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let out = self.value(a).mul(&c)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::MulConst(a, c), ng))
    }

    /// Dropout with a mask sampled ahead of time.
    pub fn dropout_fixed(&mut self, a: Var, mask: Tensor) -> Result<Var> {
        self.mul_const(a, mask)
    }

    pub fn scale(&mut self, a: Var, s: f32) -> Var {
        let out = self.value(a).scale(s);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.data().to_vec();
        for row in out.chunks_mut(x.cols()) {
            softmax_in_place(row);
        }
        let out = Tensor::new(x.shape().to_vec(), out).expect("same shape");
        let ng = self.ng(a);
        self.push(out, Op::Softmax(a), ng)
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.data().to_vec();
        for row in out.chunks_mut(x.cols()) {
            log_softmax_in_place(row);
        }
        let out = Tensor::new(x.shape().to_vec(), out).expect("same shape");
        let ng = self.ng(a);
        self.push(out, Op::LogSoftmax(a), ng)
    }

    /// Row-wise layer normalization with learned scale and shift.
    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = self.value(x);
        let (n, d) = xv.expect_matrix("layernorm")?;
        let (g, b) = (self.value(gamma), self.value(beta));
        if g.numel() != d || b.numel() != d {
            return Err(Error::dim(format!(
                "layernorm: scale/shift of {}/{} values for width {d}",
                g.numel(),
                b.numel()
            )));
        }
        let mut xhat = vec![0.0f32; n * d];
        let mut out = vec![0.0f32; n * d];
        let mut inv_std = Vec::with_capacity(n);
        for r in 0..n {
            let row = &xv.data()[r * d..(r + 1) * d];
            let mean = row.iter().map(|&v| f64::from(v)).sum::<f64>() / d as f64;
            let var = row
                .iter()
                .map(|&v| (f64::from(v) - mean).powi(2))
                .sum::<f64>()
                / d as f64;
            let inv = 1.0 / (var + LAYERNORM_EPS).sqrt();
            inv_std.push(inv as f32);
            for c in 0..d {
                let h = ((f64::from(row[c]) - mean) * inv) as f32;
                xhat[r * d + c] = h;
                out[r * d + c] = h * g.data()[c] + b.data()[c];
            }
        }
        let shape = vec![n, d];
        let out = Tensor::new(shape.clone(), out)?;
        let xhat = Tensor::new(shape, xhat)?;
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            ng,
        ))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .map(|x| 0.5 * x * (1.0 + fast_tanh(GELU_C * (x + GELU_A * x * x * x))));
        let ng = self.ng(a);
        self.push(out, Op::Gelu(a), ng)
    }

    /// Selects rows `ids` of a `[V x d]` table.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (v, d) = t.expect_matrix("gather")?;
        if ids.is_empty() {
            return Err(Error::dim("gather: no indices"));
        }
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            if i >= v {
                return Err(Error::dim(format!("gather: index {i} out of {v} rows")));
            }
            out.extend_from_slice(t.row(i));
        }
        let out = Tensor::new(vec![ids.len(), d], out)?;
        let ng = self.ng(table);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// Mean over rows, giving `[1 x d]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (n, d) = x.expect_matrix("mean_rows")?;
        let mut acc = vec![0.0f64; d];
        for row in x.data().chunks(d) {
            for (s, &v) in acc.iter_mut().zip(row) {
                *s += f64::from(v);
            }
        }
        let out = acc.iter().map(|s| (s / n as f64) as f32).collect();
        let out = Tensor::new(vec![1, d], out)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::MeanRows(a), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dim("concat_rows: nothing to concatenate"))?;
        let d = self.value(*first).cols();
        let mut data = Vec::new();
        let mut n = 0;
        for &p in parts {
            let v = self.value(p);
            let (r, c) = v.expect_matrix("concat_rows")?;
            if c != d {
                return Err(Error::dim(format!("concat_rows: widths {d} and {c}")));
            }
            data.extend_from_slice(v.data());
            n += r;
        }
        let out = Tensor::new(vec![n, d], data)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Columns `[start, start + width)` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let x = self.value(a);
        let (n, d) = x.expect_matrix("slice_cols")?;
        if width == 0 || start + width > d {
            return Err(Error::dim(format!(
                "slice_cols: [{start}, {}) out of width {d}",
                start + width
            )));
        }
        let mut out = Vec::with_capacity(n * width);
        for row in x.data().chunks(d) {
            out.extend_from_slice(&row[start..start + width]);
        }
        let out = Tensor::new(vec![n, width], out)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceCols { x: a, start }, ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dim("concat_cols: nothing to concatenate"))?;
        let n = self.value(*first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).expect_matrix("concat_cols")?;
            if r != n {
                return Err(Error::dim(format!("concat_cols: heights {n} and {r}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for r in 0..n {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(vec![n, total], out)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    /// Natural log; every input entry must be positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if let Some(bad) = x.data().iter().find(|&&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::Contract(format!("log of non-positive value {bad}")));
        }
        let out = x.map(f32::ln);
        let ng = self.ng(a);
        Ok(self.push(out, Op::Log(a), ng))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f32::exp);
        let ng = self.ng(a);
        self.push(out, Op::Exp(a), ng)
    }

    /// Pairwise cosine similarities of the rows of an `[n x d]` matrix.
    ///
    /// Fails on a zero-norm row instead of smoothing it away.
    pub fn cosine_matrix(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (n, d) = x.expect_matrix("cosine_matrix")?;
        let mut norms = Vec::with_capacity(n);
        let mut normed = Vec::with_capacity(n * d);
        for (r, row) in x.data().chunks(d).enumerate() {
            let norm = row
                .iter()
                .map(|&v| f64::from(v).powi(2))
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                return Err(Error::param(format!("cosine: row {r} has zero norm")));
            }
            norms.push(norm as f32);
            normed.extend(row.iter().map(|&v| (f64::from(v) / norm) as f32));
        }
        let normed = Tensor::new(vec![n, d], normed)?;
        let mut sims = vec![0.0f32; n * n];
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = normed
                    .row(i)
                    .iter()
                    .zip(normed.row(j))
                    .map(|(&p, &q)| f64::from(p) * f64::from(q))
                    .sum();
                sims[i * n + j] = dot.clamp(-1.0, 1.0) as f32;
            }
        }
        let out = Tensor::new(vec![n, n], sims)?;
        let ng = self.ng(a);
        Ok(self.push(
            out,
            Op::Cosine {
                x: a,
                normed,
                norms,
            },
            ng,
        ))
    }

    /// Sums the last axis: `[n x d] -> [n]`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let d = x.cols();
        let out: Vec<f32> = x
            .data()
            .chunks(d)
            .map(|row| row.iter().map(|&v| f64::from(v)).sum::<f64>() as f32)
            .collect();
        let out = Tensor::vector(out).expect("non-empty");
        let ng = self.ng(a);
        self.push(out, Op::SumRows(a), ng)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(out, Op::SumAll(a), ng)
    }

    /// Reverse pass from a single-element output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let v = self.value(output);
        if v.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got shape {:?}",
                v.shape()
            )));
        }
        self.backward_with(output, Tensor::ones(v.shape()))
    }

    /// Reverse pass seeded with an explicit output adjoint.
    pub fn backward_with(&self, output: Var, seed: Tensor) -> Result<Gradients> {
        self.value(output)
            .expect_same_shape(&seed, "backward seed")?;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed);
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[i].take() else {
                continue;
            };
            self.propagate(node, &dy, &mut grads)?;
            grads[i] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
        if !self.ng(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn propagate(&self, node: &Node<'a>, dy: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let y: &Tensor = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    let g = dy.matmul_t(self.value(*b), false, true)?;
                    self.accumulate(grads, *a, g)?;
                }
                if self.ng(*b) {
                    let g = self.value(*a).matmul_t(dy, true, false)?;
                    self.accumulate(grads, *b, g)?;
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, dy.transpose()?)?,
            Op::Add(a, b) => {
                self.accumulate(grads, *a, dy.clone())?;
                self.accumulate(grads, *b, dy.clone())?;
            }
            Op::AddRow(a, bias) => {
                self.accumulate(grads, *a, dy.clone())?;
                if self.ng(*bias) {
                    let d = dy.cols();
                    let mut acc = vec![0.0f64; d];
                    for row in dy.data().chunks(d) {
                        for (s, &v) in acc.iter_mut().zip(row) {
                            *s += f64::from(v);
                        }
                    }
                    let shape = self.value(*bias).shape().to_vec();
                    let g = Tensor::new(shape, acc.iter().map(|&s| s as f32).collect())?;
                    self.accumulate(grads, *bias, g)?;
                }
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    self.accumulate(grads, *a, dy.mul(self.value(*b))?)?;
                }
                if self.ng(*b) {
                    self.accumulate(grads, *b, dy.mul(self.value(*a))?)?;
                }
            }
            Op::MulConst(a, c) => self.accumulate(grads, *a, dy.mul(c)?)?,
            Op::Scale(a, s) => self.accumulate(grads, *a, dy.scale(*s))?,
            Op::Softmax(a) => {
                let d = y.cols();
                let mut g = vec![0.0f32; y.numel()];
                for ((gr, yr), dr) in g
                    .chunks_mut(d)
                    .zip(y.data().chunks(d))
                    .zip(dy.data().chunks(d))
                {
                    let dot: f64 = yr
                        .iter()
                        .zip(dr)
                        .map(|(&p, &q)| f64::from(p) * f64::from(q))
                        .sum();
                    let dot = dot as f32;
                    for ((o, &p), &q) in gr.iter_mut().zip(yr).zip(dr) {
                        *o = p * (q - dot);
                    }
                }
                self.accumulate(grads, *a, Tensor::new(y.shape().to_vec(), g)?)?;
            }
            Op::LogSoftmax(a) => {
                let d = y.cols();
                let mut g = vec![0.0f32; y.numel()];
                for ((gr, yr), dr) in g
                    .chunks_mut(d)
                    .zip(y.data().chunks(d))
                    .zip(dy.data().chunks(d))
                {
                    let total = dr.iter().map(|&q| f64::from(q)).sum::<f64>() as f32;
                    for ((o, &ly), &q) in gr.iter_mut().zip(yr).zip(dr) {
                        *o = q - ly.exp() * total;
                    }
                }
                self.accumulate(grads, *a, Tensor::new(y.shape().to_vec(), g)?)?;
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let d = y.cols();
                let gv = self.value(*gamma).data();
                if self.ng(*gamma) || self.ng(*beta) {
                    let mut dg = vec![0.0f64; d];
                    let mut db = vec![0.0f64; d];
                    for (dr, hr) in dy.data().chunks(d).zip(xhat.data().chunks(d)) {
                        for c in 0..d {
                            dg[c] += f64::from(dr[c]) * f64::from(hr[c]);
                            db[c] += f64::from(dr[c]);
                        }
                    }
                    let gshape = self.value(*gamma).shape().to_vec();
                    let bshape = self.value(*beta).shape().to_vec();
                    let dg = Tensor::new(gshape, dg.iter().map(|&v| v as f32).collect())?;
                    let db = Tensor::new(bshape, db.iter().map(|&v| v as f32).collect())?;
                    self.accumulate(grads, *gamma, dg)?;
                    self.accumulate(grads, *beta, db)?;
                }
                if self.ng(*x) {
                    let mut dx = vec![0.0f32; y.numel()];
                    for (r, ((dxr, dr), hr)) in dx
                        .chunks_mut(d)
                        .zip(dy.data().chunks(d))
                        .zip(xhat.data().chunks(d))
                        .enumerate()
                    {
                        let mut sum_dh = 0.0f64;
                        let mut sum_dh_h = 0.0f64;
                        for c in 0..d {
                            let dh = f64::from(dr[c]) * f64::from(gv[c]);
                            sum_dh += dh;
                            sum_dh_h += dh * f64::from(hr[c]);
                        }
                        let inv = f64::from(inv_std[r]);
                        let n = d as f64;
                        for c in 0..d {
                            let dh = f64::from(dr[c]) * f64::from(gv[c]);
                            dxr[c] =
                                (inv / n * (n * dh - sum_dh - f64::from(hr[c]) * sum_dh_h)) as f32;
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(y.shape().to_vec(), dx)?)?;
                }
            }
            Op::Gelu(a) => {
                let x = self.value(*a);
                let g = x.zip_map(dy, |x, d| {
                    let t = fast_tanh(GELU_C * (x + GELU_A * x * x * x));
                    let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                    d * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                })?;
                self.accumulate(grads, *a, g)?;
            }
            Op::Gather { table, ids } => {
                let t = self.value(*table);
                let d = t.cols();
                let mut g = vec![0.0f32; t.numel()];
                for (r, &i) in ids.iter().enumerate() {
                    for (o, &v) in g[i * d..(i + 1) * d].iter_mut().zip(dy.row(r)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *table, Tensor::new(t.shape().to_vec(), g)?)?;
            }
            Op::MeanRows(a) => {
                let x = self.value(*a);
                let (n, d) = (x.rows(), x.cols());
                let inv = 1.0 / n as f32;
                let row: Vec<f32> = dy.data().iter().map(|&v| v * inv).collect();
                let mut g = Vec::with_capacity(n * d);
                for _ in 0..n {
                    g.extend_from_slice(&row);
                }
                self.accumulate(grads, *a, Tensor::new(x.shape().to_vec(), g)?)?;
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let r = self.value(p).rows();
                    if self.ng(p) {
                        self.accumulate(grads, p, dy.slice_rows(start, r)?)?;
                    }
                    start += r;
                }
            }
            Op::SliceCols { x, start } => {
                let xv = self.value(*x);
                let (n, d) = (xv.rows(), xv.cols());
                let w = dy.cols();
                let mut g = vec![0.0f32; n * d];
                for r in 0..n {
                    g[r * d + start..r * d + start + w].copy_from_slice(dy.row(r));
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), g)?)?;
            }
            Op::ConcatCols(parts) => {
                let n = dy.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.ng(p) {
                        let mut g = Vec::with_capacity(n * w);
                        for r in 0..n {
                            g.extend_from_slice(&dy.row(r)[offset..offset + w]);
                        }
                        self.accumulate(grads, p, Tensor::new(vec![n, w], g)?)?;
                    }
                    offset += w;
                }
            }
            Op::Log(a) => {
                let g = dy.zip_map(self.value(*a), |d, x| d / x)?;
                self.accumulate(grads, *a, g)?;
            }
            Op::Exp(a) => self.accumulate(grads, *a, dy.mul(y)?)?,
            Op::Cosine { x, normed, norms } => {
                // S = N N^T  =>  dN = (dS + dS^T) N, then project out the radial part.
                let sym = dy.add(&dy.transpose()?)?;
                let dn = sym.matmul(normed)?;
                let d = normed.cols();
                let mut g = vec![0.0f32; normed.numel()];
                for (r, gr) in g.chunks_mut(d).enumerate() {
                    let (nr, dr) = (normed.row(r), dn.row(r));
                    let radial: f64 = nr
                        .iter()
                        .zip(dr)
                        .map(|(&p, &q)| f64::from(p) * f64::from(q))
                        .sum();
                    let inv = 1.0 / f64::from(norms[r]);
                    for c in 0..d {
                        gr[c] = ((f64::from(dr[c]) - f64::from(nr[c]) * radial) * inv) as f32;
                    }
                }
                self.accumulate(grads, *x, Tensor::new(normed.shape().to_vec(), g)?)?;
            }
            Op::SumRows(a) => {
                let x = self.value(*a);
                let d = x.cols();
                let mut g = Vec::with_capacity(x.numel());
                for &v in dy.data() {
                    g.extend(std::iter::repeat_n(v, d));
                }
                self.accumulate(grads, *a, Tensor::new(x.shape().to_vec(), g)?)?;
            }
            Op::SumAll(a) => {
                let x = self.value(*a);
                self.accumulate(grads, *a, Tensor::full(x.shape(), dy.data()[0]))?;
            }
        }
        Ok(())
    }
}

/// Evaluates a scalar function of `params` and its gradient with respect to
/// every entry, frozen or not.
///
/// `f` receives one leaf per parameter, in set order, and must return a
/// single-element node.
pub fn value_and_grad<'p, F>(params: &'p ParamSet, f: F) -> Result<(f32, ParamGrads)>
where
    F: FnOnce(&mut Graph<'p>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = g.bind(params);
    let out = f(&mut g, &vars)?;
    let value = g.value(out).item()?;
    let grads = g.backward(out)?;
    let tensors = vars
        .iter()
        .zip(params.tensors())
        .map(|(&v, t)| grads.get_or_zeros(v, t))
        .collect();
    Ok((value, ParamGrads::new(tensors)))
}
