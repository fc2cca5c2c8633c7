//! Differentiate a small log-determinant objective and compare against
//! central finite differences.

use profiti_autodiff::check::max_grad_error;
use profiti_autodiff::{Graph, Tensor};

fn main() -> profiti_autodiff::Result<()> {
    let a = Tensor::from_rows(&[vec![2.0, 0.3, -0.1], vec![0.4, 1.5, 0.2], vec![-0.3, 0.1, 1.8]])?;
    let b = Tensor::from_rows(&[vec![0.5], vec![-1.0], vec![0.25]])?;

    // f(A, b) = log|det A| + sum(tanh(A b))
    let f = |g: &mut Graph, v: &[profiti_autodiff::Var]| {
        let ld = g.log_abs_det(v[0])?;
        let ab = g.matmul(v[0], v[1])?;
        let t = g.tanh(ab)?;
        let s = g.sum(t)?;
        g.add(ld, s)
    };

    let mut g = Graph::new();
    let va = g.constant(a.clone());
    let vb = g.constant(b.clone());
    let out = f(&mut g, &[va, vb])?;
    let grads = g.backward(out)?;
    println!("f = {:.6}", g.value(out).item());
    println!("df/dA = {:?}", grads.get(va).expect("gradient for A"));
    println!("df/db = {:?}", grads.get(vb).expect("gradient for b"));

    let err = max_grad_error(&f, &[a, b], 1e-5)?;
    println!("max relative error vs finite differences: {err:.2e}");
    Ok(())
}
