//! Central finite-difference gradient checking.
//!
//! This path only evaluates the forward graph, so it is an independent
//! oracle for the reverse pass.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Relative error. The denominator is floored at `1e-3` so that
/// gradients near zero are compared absolutely; below that scale the
/// rounding error of a central difference dominates.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Numerical gradient of a scalar function of several tensors.
pub fn numeric_grad<F>(f: &F, inputs: &[Tensor], step: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |ins: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).data().iter().sum())
    };
    let mut out = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for k in 0..inputs.len() {
        let mut grad = Tensor::zeros(inputs[k].shape());
        for i in 0..inputs[k].numel() {
            let x0 = inputs[k].data()[i];
            work[k].data_mut()[i] = x0 + step;
            let fp = eval(&work)?;
            work[k].data_mut()[i] = x0 - step;
            let fm = eval(&work)?;
            work[k].data_mut()[i] = x0;
            grad.data_mut()[i] = (fp - fm) / (2.0 * step);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Analytic gradient of the summed output of `f` with respect to each
/// input, from the reverse pass.
pub fn analytic_grad<F>(f: &F, inputs: &[Tensor]) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let loss = g.sum(out)?;
    let grads = g.backward(loss)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect())
}

/// Largest relative error between analytic and numeric gradients.
pub fn max_grad_error<F>(f: &F, inputs: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let a = analytic_grad(f, inputs)?;
    let n = numeric_grad(f, inputs, step)?;
    let mut worst: f64 = 0.0;
    for (ta, tn) in a.iter().zip(&n) {
        for (&x, &y) in ta.data().iter().zip(tn.data()) {
            worst = worst.max(rel_err(x, y));
        }
    }
    Ok(worst)
}
