//! Dynamic computation graph with a tape-ordered backward pass.
//!
//! Nodes are appended in evaluation order, so the tape index is already a
//! topological order. `backward` walks it once from the loss to the leaves.

use crate::error::{AdError, Result};
use crate::linalg::{self, Lu};
use crate::params::{ParamGrads, ParamId, ParamStore};
use crate::tensor::{matmul_nt_into, matmul_tn_into, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Bcast {
    Same,
    Scalar,
    /// Broadcast a `[1, n]` row across all rows.
    Row(usize),
    /// Broadcast a `[m, 1]` column across `n` columns.
    Col(usize),
}

impl Bcast {
    #[inline]
    fn map(self, i: usize) -> usize {
        match self {
            Bcast::Same => i,
            Bcast::Scalar => 0,
            Bcast::Row(n) => i % n,
            Bcast::Col(n) => i / n,
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var, Bcast, Bcast),
    Sub(Var, Var, Bcast, Bcast),
    Mul(Var, Var, Bcast, Bcast),
    Div(Var, Var, Bcast, Bcast),
    Scale(Var, f64),
    /// Elementwise map with the local derivative cached at forward time.
    Unary(Var, Vec<f64>),
    MatMul(Var, Var),
    Transpose(Var),
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    SoftmaxRows(Var),
    Select(Var, Var, Vec<bool>),
    GatherRows(Var, Vec<usize>),
    Tril(Var, bool),
    Diag(Var),
    DiagEmbed(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Reshape(Var),
    /// Holds `A^{-T}`.
    LogAbsDet(Var, Tensor),
    /// Holds the outer product `u v^T`.
    SpectralNorm(Var, Tensor),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Reverse-mode tape. One graph per forward evaluation.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> AdError {
    AdError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn broadcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(Vec<usize>, Bcast, Bcast)> {
    if a.shape() == b.shape() {
        return Ok((a.shape().to_vec(), Bcast::Same, Bcast::Same));
    }
    if b.numel() == 1 {
        return Ok((a.shape().to_vec(), Bcast::Same, Bcast::Scalar));
    }
    if a.numel() == 1 {
        return Ok((b.shape().to_vec(), Bcast::Scalar, Bcast::Same));
    }
    let small = |big: &Tensor, s: &Tensor| -> Option<Bcast> {
        if big.shape().len() != 2 {
            return None;
        }
        let (m, n) = big.dims2();
        let ss = s.shape();
        if (ss == [1, n] || ss == [n]) && n > 0 {
            Some(Bcast::Row(n))
        } else if ss == [m, 1] {
            Some(Bcast::Col(n))
        } else {
            None
        }
    };
    if let Some(bb) = small(a, b) {
        return Ok((a.shape().to_vec(), Bcast::Same, bb));
    }
    if let Some(ba) = small(b, a) {
        return Ok((b.shape().to_vec(), ba, Bcast::Same));
    }
    Err(mismatch(op, a, b))
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(AdError::NonFinite { op })
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A constant input; gradients are still reported for it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.constant(Tensor::scalar(x))
    }

    /// Register a trainable parameter from `store`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        mk: impl Fn(Var, Var, Bcast, Bcast) -> Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (shape, ba, bb) = broadcast(name, ta, tb)?;
        let n: usize = shape.iter().product();
        let (da, db) = (ta.data(), tb.data());
        let data: Vec<f64> = (0..n).map(|i| f(da[ba.map(i)], db[bb.map(i)])).collect();
        let out = Tensor::new(shape, data)?;
        check_finite(name, &out)?;
        Ok(self.push(out, mk(a, b, ba, bb)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * factor);
        check_finite("scale", &out)?;
        Ok(self.push(out, Op::Scale(a, factor)))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map(a, "add_scalar", |x| (x + c, 1.0))
    }

    /// Elementwise map; `f` returns `(value, derivative)`.
    pub fn map(
        &mut self,
        a: Var,
        name: &'static str,
        f: impl Fn(f64) -> (f64, f64),
    ) -> Result<Var> {
        let t = self.value(a);
        let mut vals = Vec::with_capacity(t.numel());
        let mut ders = Vec::with_capacity(t.numel());
        for &x in t.data() {
            let (v, d) = f(x);
            if !v.is_finite() || !d.is_finite() {
                return Err(AdError::NonFinite { op: name });
            }
            vals.push(v);
            ders.push(d);
        }
        let out = Tensor::new(t.shape().to_vec(), vals)?;
        Ok(self.push(out, Op::Unary(a, ders)))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.map(a, "exp", |x| {
            let e = x.exp();
            (e, e)
        })
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(&bad) = self.value(a).data().iter().find(|&&x| !(x > 0.0)) {
            return Err(AdError::Domain {
                op: "log",
                value: bad,
            });
        }
        self.map(a, "log", |x| (x.ln(), 1.0 / x))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if let Some(&bad) = self.value(a).data().iter().find(|&&x| !(x > 0.0)) {
            return Err(AdError::Domain {
                op: "sqrt",
                value: bad,
            });
        }
        self.map(a, "sqrt", |x| {
            let s = x.sqrt();
            (s, 0.5 / s)
        })
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map(a, "tanh", |x| {
            let t = x.tanh();
            (t, 1.0 - t * t)
        })
    }

    pub fn sinh(&mut self, a: Var) -> Result<Var> {
        self.map(a, "sinh", |x| (x.sinh(), x.cosh()))
    }

    pub fn cosh(&mut self, a: Var) -> Result<Var> {
        self.map(a, "cosh", |x| (x.cosh(), x.sinh()))
    }

    pub fn asinh(&mut self, a: Var) -> Result<Var> {
        self.map(a, "asinh", |x| (x.asinh(), 1.0 / (1.0 + x * x).sqrt()))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.map(a, "softplus", |x| (softplus(x), sigmoid(x)))
    }

    /// `|x|`; the derivative at zero is taken as zero.
    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.map(a, "abs", |x| (x.abs(), x.signum() * (x != 0.0) as u8 as f64))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.map(a, "square", |x| (x * x, 2.0 * x))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        check_finite("matmul", &out)?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.shape().len() != 2 {
            return Err(mismatch("transpose", t, t));
        }
        let out = t.transpose();
        Ok(self.push(out, Op::Transpose(a)))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).data().iter().sum();
        let out = Tensor::scalar(s);
        check_finite("sum", &out)?;
        Ok(self.push(out, Op::Sum(a)))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Sum over rows: `[m, n] -> [1, n]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = t.dims2();
        let mut out = vec![0.0; n];
        for i in 0..m {
            for (o, x) in out.iter_mut().zip(t.row(i)) {
                *o += x;
            }
        }
        let out = Tensor::matrix(1, n, out)?;
        check_finite("sum_rows", &out)?;
        Ok(self.push(out, Op::SumRows(a)))
    }

    /// Sum over columns: `[m, n] -> [m, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let m = t.rows();
        let out: Vec<f64> = (0..m).map(|i| t.row(i).iter().sum()).collect();
        let out = Tensor::column(out);
        check_finite("sum_cols", &out)?;
        Ok(self.push(out, Op::SumCols(a)))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = t.dims2();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = t.row(i);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..n {
                let e = (row[j] - mx).exp();
                out[i * n + j] = e;
                z += e;
            }
            for j in 0..n {
                out[i * n + j] /= z;
            }
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        check_finite("softmax_rows", &out)?;
        Ok(self.push(out, Op::SoftmaxRows(a)))
    }

    /// `mask[i] ? a[i] : b[i]` with `a`, `b` and `mask` of equal size.
    pub fn select(&mut self, mask: &[bool], a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() || mask.len() != ta.numel() {
            return Err(mismatch("select", ta, tb));
        }
        let data = mask
            .iter()
            .zip(ta.data().iter().zip(tb.data()))
            .map(|(&m, (&x, &y))| if m { x } else { y })
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Select(a, b, mask.to_vec())))
    }

    /// Output row `i` is input row `idx[i]`. Indices may repeat (lookup
    /// tables) or form a permutation.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = t.dims2();
        if t.shape().len() != 2 {
            return Err(mismatch("gather_rows", t, t));
        }
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            if i >= m {
                return Err(AdError::ShapeMismatch {
                    op: "gather_rows",
                    lhs: t.shape().to_vec(),
                    rhs: vec![i],
                });
            }
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::matrix(idx.len(), n, data)?;
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec())))
    }

    /// Keep the lower triangle; `strict` also zeroes the diagonal.
    pub fn tril(&mut self, a: Var, strict: bool) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = t.dims2();
        let mut out = t.clone();
        for i in 0..m {
            for j in 0..n {
                if j > i || (strict && j == i) {
                    out.data_mut()[i * n + j] = 0.0;
                }
            }
        }
        Ok(self.push(out, Op::Tril(a, strict)))
    }

    /// Diagonal of a square matrix as an `[n, 1]` column.
    pub fn diag(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = t.dims2();
        if t.shape().len() != 2 || m != n {
            return Err(mismatch("diag", t, t));
        }
        let out = Tensor::column((0..n).map(|i| t.at(i, i)).collect());
        Ok(self.push(out, Op::Diag(a)))
    }

    /// Square matrix with the given vector on its diagonal.
    pub fn diag_embed(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let n = t.numel();
        let mut out = Tensor::zeros(&[n, n]);
        for (i, &x) in t.data().iter().enumerate() {
            out.data_mut()[i * n + i] = x;
        }
        Ok(self.push(out, Op::DiagEmbed(a)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(parts[0]);
        let m = first.rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() != 2 || t.rows() != m {
                return Err(mismatch("concat_cols", first, t));
            }
            widths.push(t.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; m * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let t = self.value(p);
            for i in 0..m {
                data[i * total + off..i * total + off + w].copy_from_slice(t.row(i));
            }
            off += w;
        }
        let out = Tensor::matrix(m, total, data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = t.dims2();
        if t.shape().len() != 2 || start > end || end > n {
            return Err(AdError::ShapeMismatch {
                op: "slice_cols",
                lhs: t.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&t.row(i)[start..end]);
        }
        let out = Tensor::matrix(m, w, data)?;
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// `log |det A|` of a square matrix via LU with partial pivoting.
    pub fn log_abs_det(&mut self, a: Var) -> Result<Var> {
        let lu = Lu::new(self.value(a))?;
        let (ld, _) = lu.log_abs_det();
        if !ld.is_finite() {
            return Err(AdError::Singular);
        }
        let inv_t = lu.inverse().transpose();
        Ok(self.push(Tensor::scalar(ld), Op::LogAbsDet(a, inv_t)))
    }

    /// Largest singular value, by power iteration.
    pub fn spectral_norm(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = t.dims2();
        let s = linalg::spectral_norm(t, linalg::POWER_ITER_TOL, linalg::POWER_ITER_MAX)?;
        let mut uv = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                uv[i * n + j] = s.u[i] * s.v[j];
            }
        }
        let uv = Tensor::matrix(m, n, uv)?;
        Ok(self.push(Tensor::scalar(s.sigma), Op::SpectralNorm(a, uv)))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(AdError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(lt.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
            let slot = &mut grads[v.0];
            let t = slot.get_or_insert_with(|| Tensor::zeros(self.nodes[v.0].value.shape()));
            f(t.data_mut());
        };
        let gd = g.data();
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::Add(a, b, ba, bb) => {
                acc(*a, &|d| reduce_into(d, gd, *ba, |x, _| x));
                acc(*b, &|d| reduce_into(d, gd, *bb, |x, _| x));
            }
            Op::Sub(a, b, ba, bb) => {
                acc(*a, &|d| reduce_into(d, gd, *ba, |x, _| x));
                acc(*b, &|d| reduce_into(d, gd, *bb, |x, _| -x));
            }
            Op::Mul(a, b, ba, bb) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &|d| reduce_into(d, gd, *ba, |x, i| x * vb[bb.map(i)]));
                acc(*b, &|d| reduce_into(d, gd, *bb, |x, i| x * va[ba.map(i)]));
            }
            Op::Div(a, b, ba, bb) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &|d| reduce_into(d, gd, *ba, |x, i| x / vb[bb.map(i)]));
                acc(*b, &|d| {
                    reduce_into(d, gd, *bb, |x, i| {
                        let y = vb[bb.map(i)];
                        -x * va[ba.map(i)] / (y * y)
                    })
                });
            }
            Op::Scale(a, f) => acc(*a, &|d| {
                for (o, x) in d.iter_mut().zip(gd) {
                    *o += x * f;
                }
            }),
            Op::Unary(a, der) => acc(*a, &|d| {
                for ((o, x), k) in d.iter_mut().zip(gd).zip(der) {
                    *o += x * k;
                }
            }),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2();
                let n = tb.cols();
                // dA = G B^T, dB = A^T G
                acc(*a, &|d| matmul_nt_into(gd, tb.data(), d, m, n, k));
                acc(*b, &|d| matmul_tn_into(ta.data(), gd, d, k, m, n));
            }
            Op::Transpose(a) => {
                let gt = g.transpose();
                acc(*a, &|d| {
                    for (o, x) in d.iter_mut().zip(gt.data()) {
                        *o += x;
                    }
                })
            }
            Op::Sum(a) => {
                let s = gd[0];
                acc(*a, &|d| d.iter_mut().for_each(|o| *o += s));
            }
            Op::SumRows(a) => {
                let n = out.cols();
                acc(*a, &|d| {
                    for (i, o) in d.iter_mut().enumerate() {
                        *o += gd[i % n];
                    }
                })
            }
            Op::SumCols(a) => {
                let n = self.value(*a).cols();
                acc(*a, &|d| {
                    for (i, o) in d.iter_mut().enumerate() {
                        *o += gd[i / n];
                    }
                })
            }
            Op::SoftmaxRows(a) => {
                let (m, n) = out.dims2();
                let y = out.data();
                acc(*a, &|d| {
                    for i in 0..m {
                        let r = i * n..(i + 1) * n;
                        let dot: f64 = gd[r.clone()].iter().zip(&y[r.clone()]).map(|(g, y)| g * y).sum();
                        for j in r {
                            d[j] += y[j] * (gd[j] - dot);
                        }
                    }
                })
            }
            Op::Select(a, b, mask) => {
                acc(*a, &|d| {
                    for ((o, x), &m) in d.iter_mut().zip(gd).zip(mask) {
                        if m {
                            *o += x;
                        }
                    }
                });
                acc(*b, &|d| {
                    for ((o, x), &m) in d.iter_mut().zip(gd).zip(mask) {
                        if !m {
                            *o += x;
                        }
                    }
                });
            }
            Op::GatherRows(a, idx) => {
                let n = out.cols();
                acc(*a, &|d| {
                    for (r, &src) in idx.iter().enumerate() {
                        for j in 0..n {
                            d[src * n + j] += gd[r * n + j];
                        }
                    }
                })
            }
            Op::Tril(a, strict) => {
                let (m, n) = out.dims2();
                acc(*a, &|d| {
                    for i in 0..m {
                        let hi = if *strict { i } else { (i + 1).min(n) };
                        for j in 0..hi.min(n) {
                            d[i * n + j] += gd[i * n + j];
                        }
                    }
                })
            }
            Op::Diag(a) => {
                let n = out.numel();
                acc(*a, &|d| {
                    for i in 0..n {
                        d[i * n + i] += gd[i];
                    }
                })
            }
            Op::DiagEmbed(a) => {
                let n = out.rows();
                acc(*a, &|d| {
                    for (i, o) in d.iter_mut().enumerate() {
                        *o += gd[i * n + i];
                    }
                })
            }
            Op::ConcatCols(parts) => {
                let (m, total) = out.dims2();
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    acc(p, &|d| {
                        for i in 0..m {
                            for j in 0..w {
                                d[i * w + j] += gd[i * total + off + j];
                            }
                        }
                    });
                    off += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (m, w) = out.dims2();
                let n = self.value(*a).cols();
                acc(*a, &|d| {
                    for i in 0..m {
                        for j in 0..w {
                            d[i * n + start + j] += gd[i * w + j];
                        }
                    }
                })
            }
            Op::Reshape(a) => acc(*a, &|d| {
                for (o, x) in d.iter_mut().zip(gd) {
                    *o += x;
                }
            }),
            Op::LogAbsDet(a, m) | Op::SpectralNorm(a, m) => {
                let s = gd[0];
                acc(*a, &|d| {
                    for (o, x) in d.iter_mut().zip(m.data()) {
                        *o += s * x;
                    }
                })
            }
        }
    }
}

/// Accumulate `f(g[i], i)` into `d[bc.map(i)]`, summing over broadcast
/// positions.
fn reduce_into(d: &mut [f64], g: &[f64], bc: Bcast, f: impl Fn(f64, usize) -> f64) {
    match bc {
        Bcast::Same => {
            for (i, (o, &x)) in d.iter_mut().zip(g).enumerate() {
                *o += f(x, i);
            }
        }
        _ => {
            for (i, &x) in g.iter().enumerate() {
                d[bc.map(i)] += f(x, i);
            }
        }
    }
}

/// Gradients produced by [`Graph::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` when `v` does not influence
    /// the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Collect parameter gradients in store order. Parameters that were
    /// not used get zeros.
    pub fn param_grads(&self, graph: &Graph, store: &ParamStore) -> ParamGrads {
        let mut out = ParamGrads::zeros_like(store);
        self.accumulate_into(graph, &mut out);
        out
    }

    pub fn accumulate_into(&self, graph: &Graph, out: &mut ParamGrads) {
        for (i, node) in graph.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(g) = self.grads.get(i).and_then(Option::as_ref) {
                    out.add_to(id, g);
                }
            }
        }
    }
}
