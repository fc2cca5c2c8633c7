//! Small dense linear-algebra kernels used by the graph ops and by
//! inference code that does not need gradients.

use crate::error::{AdError, Result};
use crate::tensor::Tensor;

fn square_dim(a: &Tensor, op: &'static str) -> Result<usize> {
    let s = a.shape();
    if s.len() != 2 || s[0] != s[1] {
        return Err(AdError::ShapeMismatch {
            op,
            lhs: s.to_vec(),
            rhs: s.to_vec(),
        });
    }
    Ok(s[0])
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn new(a: &Tensor) -> Result<Lu> {
        let n = square_dim(a, "lu")?;
        let mut lu = a.data().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for col in 0..n {
            let mut pivot = col;
            let mut best = lu[col * n + col].abs();
            for r in col + 1..n {
                let v = lu[r * n + col].abs();
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if best == 0.0 {
                return Err(AdError::Singular);
            }
            if pivot != col {
                for j in 0..n {
                    lu.swap(col * n + j, pivot * n + j);
                }
                perm.swap(col, pivot);
                sign = -sign;
            }
            let d = lu[col * n + col];
            for r in col + 1..n {
                let f = lu[r * n + col] / d;
                lu[r * n + col] = f;
                if f != 0.0 {
                    for j in col + 1..n {
                        lu[r * n + j] -= f * lu[col * n + j];
                    }
                }
            }
        }
        Ok(Lu { n, lu, perm, sign })
    }

    pub fn det(&self) -> f64 {
        let n = self.n;
        (0..n).map(|i| self.lu[i * n + i]).product::<f64>() * self.sign
    }

    /// `(log|det A|, sign(det A))`.
    pub fn log_abs_det(&self) -> (f64, f64) {
        let n = self.n;
        let mut sign = self.sign;
        let mut acc = 0.0;
        for i in 0..n {
            let d = self.lu[i * n + i];
            if d < 0.0 {
                sign = -sign;
            }
            acc += d.abs().ln();
        }
        (acc, sign)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    pub fn inverse(&self) -> Tensor {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        Tensor::matrix(n, n, inv).expect("square")
    }
}

pub fn det(a: &Tensor) -> Result<f64> {
    match Lu::new(a) {
        Ok(lu) => Ok(lu.det()),
        Err(AdError::Singular) => Ok(0.0),
        Err(e) => Err(e),
    }
}

pub fn solve(a: &Tensor, b: &[f64]) -> Result<Vec<f64>> {
    let lu = Lu::new(a)?;
    if b.len() != lu.n {
        return Err(AdError::ShapeMismatch {
            op: "solve",
            lhs: a.shape().to_vec(),
            rhs: vec![b.len()],
        });
    }
    Ok(lu.solve(b))
}

/// Solve `L x = b` for lower-triangular `L` by forward substitution.
/// Entries above the diagonal are ignored.
pub fn forward_substitution(l: &Tensor, b: &[f64]) -> Result<Vec<f64>> {
    let n = square_dim(l, "forward_substitution")?;
    if b.len() != n {
        return Err(AdError::ShapeMismatch {
            op: "forward_substitution",
            lhs: l.shape().to_vec(),
            rhs: vec![b.len()],
        });
    }
    let a = l.data();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let row = &a[i * n..i * n + i];
        let s: f64 = row.iter().zip(&x).map(|(l, x)| l * x).sum();
        let d = a[i * n + i];
        if d == 0.0 {
            return Err(AdError::Singular);
        }
        x[i] = (b[i] - s) / d;
    }
    Ok(x)
}

/// Largest singular value with its left and right singular vectors.
#[derive(Clone, Debug)]
pub struct SpectralNorm {
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations: usize,
}

pub const POWER_ITER_TOL: f64 = 1e-9;
pub const POWER_ITER_MAX: usize = 10_000;

/// Spectral norm `||A||_2` by power iteration on `A^T A`.
pub fn spectral_norm(a: &Tensor, tol: f64, max_iter: usize) -> Result<SpectralNorm> {
    let (m, n) = a.dims2();
    let d = a.data();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut av = vec![0.0; m];
        for i in 0..m {
            av[i] = d[i * n..(i + 1) * n].iter().zip(v).map(|(x, y)| x * y).sum();
        }
        av
    };
    let apply_t = |w: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for i in 0..m {
            let wi = w[i];
            for j in 0..n {
                out[j] += d[i * n + j] * wi;
            }
        }
        out
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    // Start from the largest row, nudged so it is not orthogonal to the
    // dominant direction in symmetric corner cases.
    let mut best = 0;
    let mut best_norm = -1.0;
    for i in 0..m {
        let r = norm(&d[i * n..(i + 1) * n]);
        if r > best_norm {
            best_norm = r;
            best = i;
        }
    }
    if best_norm <= 0.0 {
        return Ok(SpectralNorm {
            sigma: 0.0,
            u: vec![0.0; m],
            v: vec![0.0; n],
            iterations: 0,
        });
    }
    let mut v: Vec<f64> = (0..n)
        .map(|j| d[best * n + j] + best_norm * 1e-3 * (1.0 + j as f64 / n as f64))
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut lambda_prev = f64::NAN;
    for it in 1..=max_iter {
        let w = apply_t(&apply(&v));
        let lambda = norm(&w);
        if lambda == 0.0 {
            return Ok(SpectralNorm {
                sigma: 0.0,
                u: vec![0.0; m],
                v,
                iterations: it,
            });
        }
        v = w.into_iter().map(|x| x / lambda).collect();
        if (lambda - lambda_prev).abs() <= tol * lambda {
            let av = apply(&v);
            let sigma = norm(&av);
            let u = av.into_iter().map(|x| x / sigma).collect();
            return Ok(SpectralNorm {
                sigma,
                u,
                v,
                iterations: it,
            });
        }
        lambda_prev = lambda;
    }
    Err(AdError::NoConvergence(max_iter))
}
