//! Invertible attention matrices built from self-attention scores
//! `A = (X W_Q)(X W_K)^T`.
//!
//! * [`a_tri`]: lower-triangular part of `A` with a softplus diagonal plus
//!   `eps`. Used in sorted query order (SITA); `O(K)` log-determinant and
//!   `O(K^2)` inverse.
//! * [`a_reg`]: `A / (||A||_2 + eps) + I`, dense and always invertible.
//! * [`a_itrans`]: rowwise softmax of `A` plus `I`.

use profiti_autodiff::linalg::{self, Lu};
use profiti_autodiff::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::FlowState;
use crate::data::{argsort_queries, Permutation, Query, SortCriterion};
use crate::error::{ProfitiError, Result};

pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttnKind {
    #[default]
    Tri,
    Reg,
    Itrans,
}

/// Projections and regularizer of one attention layer.
#[derive(Clone, Debug, PartialEq)]
pub struct AttnParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub epsilon: f64,
    pub kind: AttnKind,
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn attn_scores(x: &Tensor, w_q: &Tensor, w_k: &Tensor) -> Result<Tensor> {
    let q = x.matmul(w_q)?;
    let k = x.matmul(w_k)?;
    Ok(q.matmul(&k.transpose())?)
}

pub fn a_tri(a: &Tensor, epsilon: f64) -> Tensor {
    let n = a.rows();
    let mut out = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..i {
            out.data_mut()[i * n + j] = a.at(i, j);
        }
        out.data_mut()[i * n + i] = softplus(a.at(i, i)) + epsilon;
    }
    out
}

/// `log |det|` of a triangular matrix from its diagonal.
pub fn tri_log_det(m: &Tensor) -> f64 {
    (0..m.rows()).map(|i| m.at(i, i).abs().ln()).sum()
}

pub fn a_reg(a: &Tensor, epsilon: f64) -> Result<Tensor> {
    let s = linalg::spectral_norm(a, linalg::POWER_ITER_TOL, linalg::POWER_ITER_MAX)?;
    let n = a.rows();
    let c = 1.0 / (s.sigma + epsilon);
    let mut out = a.map(|v| v * c);
    for i in 0..n {
        out.data_mut()[i * n + i] += 1.0;
    }
    Ok(out)
}

pub fn a_itrans(a: &Tensor) -> Tensor {
    let n = a.rows();
    let mut out = Tensor::zeros(&[n, n]);
    for i in 0..n {
        let row = a.row(i);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
        for j in 0..n {
            out.data_mut()[i * n + j] = (row[j] - mx).exp() / z;
        }
        out.data_mut()[i * n + i] += 1.0;
    }
    out
}

pub fn dense_log_det(m: &Tensor) -> Result<f64> {
    Ok(Lu::new(m)?.log_abs_det().0)
}

fn matvec(m: &Tensor, v: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|i| m.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Permutation, sorted condition rows and triangular matrix for SITA.
fn sita_matrix(x: &Tensor, queries: &[Query], sort: &SortCriterion, p: &AttnParams) -> Result<(Permutation, Tensor)> {
    if x.rows() != queries.len() {
        return Err(ProfitiError::Length {
            expected: queries.len(),
            got: x.rows(),
        });
    }
    let perm = argsort_queries(queries, sort);
    let rows: Vec<Vec<f64>> = perm.indices().iter().map(|&i| x.row(i).to_vec()).collect();
    let xs = Tensor::from_rows(&rows)?;
    let a = attn_scores(&xs, &p.w_q, &p.w_k)?;
    Ok((perm, a_tri(&a, p.epsilon)))
}

/// Sort by `queries`, multiply by the triangular attention matrix, and
/// restore the input order.
pub fn sita_fwd(z: &[f64], x: &Tensor, queries: &[Query], sort: &SortCriterion, p: &AttnParams) -> Result<FlowState> {
    let (perm, m) = sita_matrix(x, queries, sort, p)?;
    let zs = perm.apply(z)?;
    let out = perm.inverse().apply(&matvec(&m, &zs))?;
    Ok(FlowState {
        values: out,
        logdet: tri_log_det(&m),
    })
}

/// Inverse of [`sita_fwd`] by forward substitution.
pub fn sita_inv(v: &[f64], x: &Tensor, queries: &[Query], sort: &SortCriterion, p: &AttnParams) -> Result<FlowState> {
    let (perm, m) = sita_matrix(x, queries, sort, p)?;
    let vs = perm.apply(v)?;
    let zs = linalg::forward_substitution(&m, &vs)?;
    Ok(FlowState {
        values: perm.inverse().apply(&zs)?,
        logdet: -tri_log_det(&m),
    })
}

/// Attention matrix and `log |det|` on a graph, for scores `a` that are
/// already in sorted order.
pub fn attn_matrix_node(g: &mut Graph, a: Var, kind: AttnKind, epsilon: f64) -> Result<(Var, Var)> {
    let n = g.value(a).rows();
    match kind {
        AttnKind::Tri => {
            let lower = g.tril(a, true)?;
            let d = g.diag(a)?;
            let d = g.softplus(d)?;
            let d = g.add_scalar(d, epsilon)?;
            let logd = g.log(d)?;
            let logdet = g.sum(logd)?;
            let dm = g.diag_embed(d)?;
            Ok((g.add(lower, dm)?, logdet))
        }
        AttnKind::Reg => {
            let s = g.spectral_norm(a)?;
            let s = g.add_scalar(s, epsilon)?;
            let scaled = g.div(a, s)?;
            let eye = g.constant(Tensor::identity(n));
            let m = g.add(scaled, eye)?;
            let logdet = g.log_abs_det(m)?;
            Ok((m, logdet))
        }
        AttnKind::Itrans => {
            let sm = g.softmax_rows(a)?;
            let eye = g.constant(Tensor::identity(n));
            let m = g.add(sm, eye)?;
            let logdet = g.log_abs_det(m)?;
            Ok((m, logdet))
        }
    }
}

/// Plain counterpart of [`attn_matrix_node`].
pub fn attn_matrix(a: &Tensor, kind: AttnKind, epsilon: f64) -> Result<Tensor> {
    match kind {
        AttnKind::Tri => Ok(a_tri(a, epsilon)),
        AttnKind::Reg => a_reg(a, epsilon),
        AttnKind::Itrans => Ok(a_itrans(a)),
    }
}
