//! Dense row-major `f64` tensors and the forward kernels shared by the
//! autograd graph.
//!
//! Only batched leading dimensions broadcast; any other shape disagreement is
//! a [`Error::Shape`].

use std::fmt;

use crate::error::{Error, Result};
use crate::param::Parameter;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape("Tensor::new", shape, &[data.len()]));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::shape("Tensor::from_rows", &[cols], &[row.len()]));
            }
            data.extend_from_slice(row);
        }
        Self::new(&[rows.len(), cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the last axis.
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Product of all axes but the last.
    pub fn rows(&self) -> usize {
        if self.shape.is_empty() {
            1
        } else {
            self.data.len() / self.cols().max(1)
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn l2_distance(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }
}

// ---------------------------------------------------------------------------
// GEMM kernels on row-major slices. All of them accumulate into `out`.

/// `out[m×n] += a[m×k] · b[k×n]`
///
/// Rows of `a` are processed four at a time so each row of `b` is loaded once
/// per block. Every output element still sums over `k` in ascending order.
pub(crate) fn gemm_nn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    let mut i = 0;
    while i + 4 <= m {
        let (o0, rest) = out[i * n..(i + 4) * n].split_at_mut(n);
        let (o1, rest) = rest.split_at_mut(n);
        let (o2, o3) = rest.split_at_mut(n);
        for p in 0..k {
            let (a0, a1, a2, a3) = (a[i * k + p], a[(i + 1) * k + p], a[(i + 2) * k + p], a[(i + 3) * k + p]);
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                let bv = b_row[j];
                o0[j] += a0 * bv;
                o1[j] += a1 * bv;
                o2[j] += a2 * bv;
                o3[j] += a3 * bv;
            }
        }
        i += 4;
    }
    for i in i..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * bv;
            }
        }
    }
}

/// `out[m×n] += a[m×k] · b[n×k]ᵀ`, via an explicit transpose of `b`.
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    let mut bt = vec![0.0; k * n];
    for j in 0..n {
        for p in 0..k {
            bt[p * n + j] = b[j * k + p];
        }
    }
    gemm_nn(a, &bt, out, m, k, n);
}

/// `out[k×n] += a[m×k]ᵀ · b[m×n]`
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    let mut r = 0;
    while r + 4 <= m {
        let (b0, b1, b2, b3) = (
            &b[r * n..(r + 1) * n],
            &b[(r + 1) * n..(r + 2) * n],
            &b[(r + 2) * n..(r + 3) * n],
            &b[(r + 3) * n..(r + 4) * n],
        );
        for p in 0..k {
            let (a0, a1, a2, a3) = (a[r * k + p], a[(r + 1) * k + p], a[(r + 2) * k + p], a[(r + 3) * k + p]);
            let out_row = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                out_row[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
        }
        r += 4;
    }
    for r in r..m {
        let b_row = &b[r * n..(r + 1) * n];
        for p in 0..k {
            let a_rp = a[r * k + p];
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_rp * bv;
            }
        }
    }
}

/// Four-lane dot product; the summation order is fixed so results are
/// reproducible bit for bit.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Shape bookkeeping for a (possibly batched) matrix product.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MatMulDims {
    pub batch: usize,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    /// `b` is a single matrix shared across the batch.
    pub shared_rhs: bool,
}

/// Validates shapes for `a · b` (or `a · bᵀ` when `transpose_rhs`).
pub(crate) fn matmul_dims(a: &[usize], b: &[usize], transpose_rhs: bool) -> Result<(MatMulDims, Vec<usize>)> {
    let op = if transpose_rhs { "matmul_t" } else { "matmul" };
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::shape(op, a, b));
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (bk, n) = if transpose_rhs {
        (b[b.len() - 1], b[b.len() - 2])
    } else {
        (b[b.len() - 2], b[b.len() - 1])
    };
    if k != bk {
        return Err(Error::shape(op, a, b));
    }
    let a_lead = &a[..a.len() - 2];
    let b_lead = &b[..b.len() - 2];
    let shared_rhs = b_lead.is_empty();
    if !shared_rhs && a_lead != b_lead {
        return Err(Error::shape(op, a, b));
    }
    let batch = a_lead.iter().product();
    let mut out_shape = a_lead.to_vec();
    out_shape.extend([m, n]);
    Ok((
        MatMulDims {
            batch,
            m,
            k,
            n,
            shared_rhs,
        },
        out_shape,
    ))
}

pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], d: MatMulDims, transpose_rhs: bool) {
    let (a_sz, b_sz, o_sz) = (d.m * d.k, d.k * d.n, d.m * d.n);
    for bi in 0..d.batch {
        let a_s = &a[bi * a_sz..(bi + 1) * a_sz];
        let b_s = if d.shared_rhs {
            b
        } else {
            &b[bi * b_sz..(bi + 1) * b_sz]
        };
        let o_s = &mut out[bi * o_sz..(bi + 1) * o_sz];
        if transpose_rhs {
            gemm_nt(a_s, b_s, o_s, d.m, d.k, d.n);
        } else {
            gemm_nn(a_s, b_s, o_s, d.m, d.k, d.n);
        }
    }
}

/// Matrix product over the last two axes. Leading axes are batch axes; `b`
/// may either share them with `a` or be a plain matrix used for every batch.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (dims, shape) = matmul_dims(a.shape(), b.shape(), false)?;
    let mut out = Tensor::zeros(&shape);
    matmul_into(a.data(), b.data(), out.data_mut(), dims, false);
    Ok(out)
}

/// Numerically stable softmax along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(Error::shape("softmax", shape, &[axis]));
    }
    let inner: usize = shape[axis + 1..].iter().product();
    let len = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let mut out = x.clone();
    let data = out.data_mut();
    let mut buf = vec![0.0; len];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| o * len * inner + j * inner + i;
            for (j, b) in buf.iter_mut().enumerate() {
                *b = data[idx(j)];
            }
            softmax_in_place(&mut buf);
            for (j, b) in buf.iter().enumerate() {
                data[idx(j)] = *b;
            }
        }
    }
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `log_softmax` of one row, written into `out`.
pub(crate) fn log_softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    for (o, v) in out.iter_mut().zip(row) {
        *o = v - lse;
    }
}

/// Per-row layer normalization over the last axis followed by the affine
/// `gain`/`bias` transform.
pub fn layer_norm(x: &Tensor, gain: &Parameter, bias: &Parameter) -> Result<Tensor> {
    let d = x.cols();
    if gain.value.len() != d || bias.value.len() != d {
        return Err(Error::shape("layer_norm", x.shape(), gain.value.shape()));
    }
    let mut out = x.clone();
    for r in 0..x.rows() {
        let row = &mut out.data_mut()[r * d..(r + 1) * d];
        let (mean, rstd) = moments(row);
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * rstd * gain.value.data()[j] + bias.value.data()[j];
        }
    }
    Ok(out)
}

/// Mean and reciprocal standard deviation (biased variance, with epsilon).
pub(crate) fn moments(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}

/// Mean negative log-likelihood over masked positions.
///
/// `logits` is `[L, V]`; `targets` and `mask` have length `L`.
pub fn cross_entropy_lm(logits: &Tensor, targets: &[usize], mask: &[bool]) -> Result<f64> {
    let (l, v) = (logits.rows(), logits.cols());
    if targets.len() != l || mask.len() != l {
        return Err(Error::shape("cross_entropy_lm", logits.shape(), &[targets.len(), mask.len()]));
    }
    let count = mask.iter().filter(|m| **m).count();
    if count == 0 {
        return Err(Error::NoSupervisedTokens);
    }
    let mut lsm = vec![0.0; v];
    let mut total = 0.0;
    for (i, (&t, &m)) in targets.iter().zip(mask).enumerate() {
        if !m {
            continue;
        }
        if t >= v {
            return Err(Error::Domain(format!("target id {t} out of vocabulary of size {v}")));
        }
        log_softmax_row(logits.row(i), &mut lsm);
        total -= lsm[t];
    }
    Ok(total / count as f64)
}

/// tanh approximation of GELU and its derivative.
#[inline]
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + gelu_inner(x).tanh())
}

#[inline]
fn gelu_inner(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    C * (x + 0.044715 * x * x * x)
}

#[inline]
pub(crate) fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let t = gelu_inner(x).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}
