//! Reverse-mode differentiation over a recorded computation graph.
//!
//! A [`Graph`] is built fresh for every forward pass. Parameter values are
//! copied in as leaves; [`Graph::backward`] walks the tape in reverse and adds
//! the resulting gradients into the owning [`ParamStore`].
//!
//! Apart from the batched matrix product, every op works on the tensor viewed
//! as a `[rows, cols]` matrix over its last axis.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::tensor::{self, gemm_nn, gemm_nt, gemm_tn, matmul_dims, matmul_into, MatMulDims, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul {
        a: Var,
        b: Var,
        dims: MatMulDims,
        transpose_rhs: bool,
    },
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Softmax {
        x: Var,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    ConcatRows(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<f64>,
        count: usize,
    },
    Sum(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::MatMul { transpose_rhs: false, .. } => "matmul",
            Op::MatMul { transpose_rhs: true, .. } => "matmul_t",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Gelu(_) => "gelu",
            Op::Softmax { .. } => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::ConcatRows(_) => "concat_rows",
            Op::SliceRows { .. } => "slice_rows",
            Op::ConcatCols(_) => "concat_cols",
            Op::SliceCols { .. } => "slice_cols",
            Op::Gather { .. } => "gather",
            Op::CrossEntropy { .. } => "cross_entropy_lm",
            Op::Sum(_) => "sum",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    all_grads: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Gradients flow to every parameter, frozen or not. Used by gradient
    /// checks.
    pub fn with_all_grads() -> Self {
        Self {
            all_grads: true,
            ..Self::default()
        }
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

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = store.get(id);
        let rg = self.all_grads || p.trainable;
        let v = self.push(p.value.clone(), Op::Param(id), rg);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` over the last two axes.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, transpose_rhs: bool) -> Result<Var> {
        let (dims, shape) = matmul_dims(self.value(a).shape(), self.value(b).shape(), transpose_rhs)?;
        let mut out = Tensor::zeros(&shape);
        matmul_into(self.value(a).data(), self.value(b).data(), out.data_mut(), dims, transpose_rhs);
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            out,
            Op::MatMul {
                a,
                b,
                dims,
                transpose_rhs,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("add", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(va.shape(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// Adds a length-`cols` vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (vx, vr) = (self.value(x), self.value(row));
        let c = vx.cols();
        if vr.len() != c {
            return Err(Error::shape("add_row", vx.shape(), vr.shape()));
        }
        let mut out = vx.clone();
        for chunk in out.data_mut().chunks_mut(c) {
            for (o, r) in chunk.iter_mut().zip(vr.data()) {
                *o += r;
            }
        }
        let rg = self.rg(&[x, row]);
        Ok(self.push(out, Op::AddRow(x, row), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("mul", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(va.shape(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= s);
        let rg = self.rg(&[x]);
        self.push(out, Op::Scale(x, s), rg)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = tensor::gelu(*v));
        let rg = self.rg(&[x]);
        self.push(out, Op::Gelu(x), rg)
    }

    /// Row-wise softmax over the last axis. With `causal`, `x` must be square
    /// and entry `(i, j)` is masked out for `j > i`.
    pub fn softmax(&mut self, x: Var, causal: bool) -> Result<Var> {
        let vx = self.value(x);
        let (r, c) = (vx.rows(), vx.cols());
        if causal && r != c {
            return Err(Error::shape("causal softmax", vx.shape(), &[r, r]));
        }
        let mut out = vx.clone();
        for (i, row) in out.data_mut().chunks_mut(c).enumerate() {
            if causal {
                tensor::softmax_in_place(&mut row[..=i]);
                row[i + 1..].iter_mut().for_each(|v| *v = 0.0);
            } else {
                tensor::softmax_in_place(row);
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Softmax { x }, rg))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let vx = self.value(x);
        let d = vx.cols();
        let (g, b) = (self.value(gain), self.value(bias));
        if g.len() != d || b.len() != d {
            return Err(Error::shape("layer_norm", vx.shape(), g.shape()));
        }
        let rows = vx.rows();
        let mut xhat = vec![0.0; vx.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = Tensor::zeros(vx.shape());
        for r in 0..rows {
            let row = vx.row(r);
            let (mean, rs) = tensor::moments(row);
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out.data_mut()[r * d + j] = h * g.data()[j] + b.data()[j];
            }
        }
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Empty("concat_rows needs at least one input"));
        };
        let c = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != c {
                return Err(Error::shape("concat_rows", self.value(first).shape(), v.shape()));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new(&[rows, c], data)?;
        let rg = self.rg(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let vx = self.value(x);
        let c = vx.cols();
        if start + len > vx.rows() {
            return Err(Error::shape("slice_rows", vx.shape(), &[start, len]));
        }
        let out = Tensor::new(&[len, c], vx.data()[start * c..(start + len) * c].to_vec())?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::SliceRows { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Empty("concat_cols needs at least one input"));
        };
        let rows = self.value(first).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(Error::shape("concat_cols", self.value(first).shape(), v.shape()));
            }
            cols += v.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(&[rows, cols], data)?;
        let rg = self.rg(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let vx = self.value(x);
        if start + len > vx.cols() {
            return Err(Error::shape("slice_cols", vx.shape(), &[start, len]));
        }
        let rows = vx.rows();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&vx.row(r)[start..start + len]);
        }
        let out = Tensor::new(&[rows, len], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::SliceCols { x, start }, rg))
    }

    /// Embedding lookup: row `ids[i]` of `table` becomes output row `i`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let vt = self.value(table);
        let c = vt.cols();
        let mut data = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= vt.rows() {
                return Err(Error::shape("gather", vt.shape(), &[id]));
            }
            data.extend_from_slice(vt.row(id));
        }
        let out = Tensor::new(&[ids.len(), c], data)?;
        let rg = self.rg(&[table]);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Mean negative log-likelihood of `targets` over rows where `mask` is set.
    pub fn cross_entropy_lm(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let vl = self.value(logits);
        let (l, v) = (vl.rows(), vl.cols());
        if targets.len() != l || mask.len() != l {
            return Err(Error::shape("cross_entropy_lm", vl.shape(), &[targets.len(), mask.len()]));
        }
        let count = mask.iter().filter(|m| **m).count();
        if count == 0 {
            return Err(Error::NoSupervisedTokens);
        }
        let mut probs = vec![0.0; l * v];
        let mut total = 0.0;
        for i in 0..l {
            if !mask[i] {
                continue;
            }
            if targets[i] >= v {
                return Err(Error::Domain(format!("target id {} out of vocabulary of size {v}", targets[i])));
            }
            let out = &mut probs[i * v..(i + 1) * v];
            tensor::log_softmax_row(vl.row(i), out);
            total -= out[targets[i]];
            out.iter_mut().for_each(|p| *p = p.exp());
        }
        let loss = Tensor::scalar(total / count as f64);
        let rg = self.rg(&[logits]);
        Ok(self.push(
            loss,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                count,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// First node (in evaluation order) holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.is_finite())
            .map(|(i, n)| (i, n.op.name()))
    }

    /// Back-propagates from the scalar `loss`, adding `∂loss/∂p` into every
    /// reachable parameter's `grad`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::shape("backward", root.value.shape(), &[1]));
        }
        if !root.requires_grad {
            return Err(Error::NotDifferentiable);
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(root.value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    let p = store.get_mut(*id);
                    for (pg, gv) in p.grad.data_mut().iter_mut().zip(g.data()) {
                        *pg += gv;
                    }
                }
                Op::MatMul {
                    a,
                    b,
                    dims,
                    transpose_rhs,
                } => self.back_matmul(&mut grads, &g, *a, *b, *dims, *transpose_rhs),
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if self.requires_grad(v) {
                            accumulate(&mut grads, v, g.data(), self.value(v).shape());
                        }
                    }
                }
                Op::AddRow(x, row) => {
                    if self.requires_grad(*x) {
                        accumulate(&mut grads, *x, g.data(), self.value(*x).shape());
                    }
                    if self.requires_grad(*row) {
                        let c = g.cols();
                        let mut gr = vec![0.0; c];
                        for chunk in g.data().chunks(c) {
                            for (o, v) in gr.iter_mut().zip(chunk) {
                                *o += v;
                            }
                        }
                        accumulate(&mut grads, *row, &gr, self.value(*row).shape());
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.requires_grad(*a) {
                        let d: Vec<f64> = g.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
                        accumulate(&mut grads, *a, &d, va.shape());
                    }
                    if self.requires_grad(*b) {
                        let d: Vec<f64> = g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect();
                        accumulate(&mut grads, *b, &d, vb.shape());
                    }
                }
                Op::Scale(x, s) => {
                    let d: Vec<f64> = g.data().iter().map(|v| v * s).collect();
                    accumulate(&mut grads, *x, &d, self.value(*x).shape());
                }
                Op::Gelu(x) => {
                    let vx = self.value(*x);
                    let d: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(vx.data())
                        .map(|(gv, xv)| gv * tensor::gelu_grad(*xv))
                        .collect();
                    accumulate(&mut grads, *x, &d, vx.shape());
                }
                Op::Softmax { x } => {
                    let p = &node.value;
                    let c = p.cols();
                    let mut d = vec![0.0; p.len()];
                    for r in 0..p.rows() {
                        let pr = p.row(r);
                        let gr = &g.data()[r * c..(r + 1) * c];
                        let s = tensor::dot(pr, gr);
                        for j in 0..c {
                            d[r * c + j] = pr[j] * (gr[j] - s);
                        }
                    }
                    accumulate(&mut grads, *x, &d, p.shape());
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let d = g.cols();
                    let rows = g.rows();
                    let gv = self.value(*gain).data();
                    if self.requires_grad(*gain) || self.requires_grad(*bias) {
                        let mut dg = vec![0.0; d];
                        let mut db = vec![0.0; d];
                        for r in 0..rows {
                            for j in 0..d {
                                let gij = g.data()[r * d + j];
                                dg[j] += gij * xhat[r * d + j];
                                db[j] += gij;
                            }
                        }
                        if self.requires_grad(*gain) {
                            accumulate(&mut grads, *gain, &dg, self.value(*gain).shape());
                        }
                        if self.requires_grad(*bias) {
                            accumulate(&mut grads, *bias, &db, self.value(*bias).shape());
                        }
                    }
                    if self.requires_grad(*x) {
                        let mut dx = vec![0.0; rows * d];
                        let n = d as f64;
                        for r in 0..rows {
                            let mut sum_dh = 0.0;
                            let mut sum_dh_h = 0.0;
                            for j in 0..d {
                                let dh = g.data()[r * d + j] * gv[j];
                                sum_dh += dh;
                                sum_dh_h += dh * xhat[r * d + j];
                            }
                            for j in 0..d {
                                let dh = g.data()[r * d + j] * gv[j];
                                dx[r * d + j] = rstd[r] * (dh - sum_dh / n - xhat[r * d + j] * sum_dh_h / n);
                            }
                        }
                        accumulate(&mut grads, *x, &dx, self.value(*x).shape());
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        if self.requires_grad(p) {
                            accumulate(&mut grads, p, &g.data()[offset..offset + n], self.value(p).shape());
                        }
                        offset += n;
                    }
                }
                Op::SliceRows { x, start } => {
                    let vx = self.value(*x);
                    let c = vx.cols();
                    let mut d = vec![0.0; vx.len()];
                    d[start * c..start * c + g.len()].copy_from_slice(g.data());
                    accumulate(&mut grads, *x, &d, vx.shape());
                }
                Op::ConcatCols(parts) => {
                    let total = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let vp = self.value(p);
                        let c = vp.cols();
                        if self.requires_grad(p) {
                            let mut d = Vec::with_capacity(vp.len());
                            for r in 0..g.rows() {
                                d.extend_from_slice(&g.data()[r * total + offset..r * total + offset + c]);
                            }
                            accumulate(&mut grads, p, &d, vp.shape());
                        }
                        offset += c;
                    }
                }
                Op::SliceCols { x, start } => {
                    let vx = self.value(*x);
                    let (c, len) = (vx.cols(), g.cols());
                    let mut d = vec![0.0; vx.len()];
                    for r in 0..g.rows() {
                        d[r * c + start..r * c + start + len].copy_from_slice(&g.data()[r * len..(r + 1) * len]);
                    }
                    accumulate(&mut grads, *x, &d, vx.shape());
                }
                Op::Gather { table, ids } => {
                    let vt = self.value(*table);
                    let c = vt.cols();
                    let mut d = vec![0.0; vt.len()];
                    for (i, &id) in ids.iter().enumerate() {
                        for j in 0..c {
                            d[id * c + j] += g.data()[i * c + j];
                        }
                    }
                    accumulate(&mut grads, *table, &d, vt.shape());
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    mask,
                    probs,
                    count,
                } => {
                    let vl = self.value(*logits);
                    let v = vl.cols();
                    let scale = g.data()[0] / *count as f64;
                    let mut d = vec![0.0; vl.len()];
                    for i in 0..vl.rows() {
                        if !mask[i] {
                            continue;
                        }
                        for j in 0..v {
                            d[i * v + j] = probs[i * v + j] * scale;
                        }
                        d[i * v + targets[i]] -= scale;
                    }
                    accumulate(&mut grads, *logits, &d, vl.shape());
                }
                Op::Sum(x) => {
                    let vx = self.value(*x);
                    let d = vec![g.data()[0]; vx.len()];
                    accumulate(&mut grads, *x, &d, vx.shape());
                }
            }
        }
        Ok(())
    }

    fn back_matmul(&self, grads: &mut [Option<Tensor>], g: &Tensor, a: Var, b: Var, d: MatMulDims, transpose_rhs: bool) {
        let (va, vb) = (self.value(a), self.value(b));
        let (a_sz, b_sz, o_sz) = (d.m * d.k, d.k * d.n, d.m * d.n);
        if self.requires_grad(a) {
            let mut da = vec![0.0; va.len()];
            for bi in 0..d.batch {
                let gs = &g.data()[bi * o_sz..(bi + 1) * o_sz];
                let bs = if d.shared_rhs {
                    vb.data()
                } else {
                    &vb.data()[bi * b_sz..(bi + 1) * b_sz]
                };
                let out = &mut da[bi * a_sz..(bi + 1) * a_sz];
                if transpose_rhs {
                    // y = a bᵀ, b is [n, k]: da = g b
                    gemm_nn(gs, bs, out, d.m, d.n, d.k);
                } else {
                    // y = a b, b is [k, n]: da = g bᵀ
                    gemm_nt(gs, bs, out, d.m, d.n, d.k);
                }
            }
            accumulate(grads, a, &da, va.shape());
        }
        if self.requires_grad(b) {
            let mut db = vec![0.0; vb.len()];
            for bi in 0..d.batch {
                let gs = &g.data()[bi * o_sz..(bi + 1) * o_sz];
                let as_ = &va.data()[bi * a_sz..(bi + 1) * a_sz];
                let off = if d.shared_rhs { 0 } else { bi * b_sz };
                let out = &mut db[off..off + b_sz];
                if transpose_rhs {
                    // db = gᵀ a  -> [n, k]
                    gemm_tn(gs, as_, out, d.m, d.n, d.k);
                } else {
                    // db = aᵀ g  -> [k, n]
                    gemm_tn(as_, gs, out, d.m, d.k, d.n);
                }
            }
            accumulate(grads, b, &db, vb.shape());
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, d: &[f64], shape: &[usize]) {
    match &mut grads[v.0] {
        Some(t) => {
            for (o, x) in t.data_mut().iter_mut().zip(d) {
                *o += x;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape, d.to_vec()).expect("gradient shape matches value"));
        }
    }
}
