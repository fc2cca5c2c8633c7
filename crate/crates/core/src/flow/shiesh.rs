//! The Shiesh activation: the time-one flow of `dv/dtau = tanh(b v)`,
//!
//! ```text
//! Shiesh(u; b)    = asinh(e^b sinh(b u)) / b
//! Shiesh^-1(v; b) = asinh(e^-b sinh(b v)) / b
//! ```
//!
//! It is odd, strictly increasing, maps R onto R, and its slope lies in
//! `(1, e^b]`. Far from the origin it is evaluated as `u + sign(u)` to
//! avoid overflow in `sinh`.

use profiti_autodiff::{Graph, Var};

use crate::error::Result;

/// Slope parameter used throughout the model.
pub const SHIESH_B: f64 = 1.0;
/// Beyond `|u| > FWD_CUTOFF` the forward map is `u + sign(u)`.
pub const FWD_CUTOFF: f64 = 5.0;
/// Beyond `|v| > INV_CUTOFF` the inverse map is `v - sign(v)`.
pub const INV_CUTOFF: f64 = 6.0;

pub fn shiesh_fwd(u: f64, b: f64) -> f64 {
    if u.abs() <= FWD_CUTOFF {
        (b.exp() * (b * u).sinh()).asinh() / b
    } else {
        u + u.signum()
    }
}

pub fn shiesh_inv(v: f64, b: f64) -> f64 {
    if v.abs() <= INV_CUTOFF {
        ((-b).exp() * (b * v).sinh()).asinh() / b
    } else {
        v - v.signum()
    }
}

pub fn shiesh_dfwd(u: f64, b: f64) -> f64 {
    if u.abs() <= FWD_CUTOFF {
        let w = b.exp() * (b * u).sinh();
        b.exp() * (b * u).cosh() / (1.0 + w * w).sqrt()
    } else {
        1.0
    }
}

/// `log Shiesh'(u; b)` together with its derivative in `u`.
pub fn shiesh_log_dfwd(u: f64, b: f64) -> (f64, f64) {
    if u.abs() <= FWD_CUTOFF {
        let (s, c) = ((b * u).sinh(), (b * u).cosh());
        let w = b.exp() * s;
        let value = b + c.ln() - 0.5 * (w * w).ln_1p();
        let slope = b * s / c - w * b * b.exp() * c / (1.0 + w * w);
        (value, slope)
    } else {
        (0.0, 0.0)
    }
}

/// Derivative of the inverse, `1 / Shiesh'(Shiesh^-1(v))`.
pub fn shiesh_dinv(v: f64, b: f64) -> f64 {
    1.0 / shiesh_dfwd(shiesh_inv(v, b), b)
}

/// Elementwise Shiesh on a graph node.
pub fn shiesh_node(g: &mut Graph, u: Var, b: f64) -> Result<Var> {
    Ok(g.map(u, "shiesh", |x| (shiesh_fwd(x, b), shiesh_dfwd(x, b)))?)
}

/// Elementwise `log Shiesh'(u)` on a graph node.
pub fn shiesh_log_dfwd_node(g: &mut Graph, u: Var, b: f64) -> Result<Var> {
    Ok(g.map(u, "shiesh_log_dfwd", |x| shiesh_log_dfwd(x, b))?)
}
