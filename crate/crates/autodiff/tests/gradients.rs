use profiti_autodiff::check::{max_grad_error, rel_err};
use profiti_autodiff::{AdError, Graph, Result, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Contract an output against fixed random weights so that ops whose
/// plain sum is constant (softmax) still have informative gradients.
fn weighted(g: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = rand_tensor(&mut rng, g.shape(out), -1.0, 1.0);
    let w = g.constant(w);
    let p = g.mul(out, w)?;
    g.sum(p)
}

type Build = fn(&mut Graph, &[Var]) -> Result<Var>;

fn unary_cases() -> Vec<(&'static str, Build, f64, f64)> {
    vec![
        ("exp", |g, v| g.exp(v[0]), -2.0, 2.0),
        ("log", |g, v| g.log(v[0]), 0.2, 2.0),
        ("tanh", |g, v| g.tanh(v[0]), -2.0, 2.0),
        ("sinh", |g, v| g.sinh(v[0]), -2.0, 2.0),
        ("cosh", |g, v| g.cosh(v[0]), -2.0, 2.0),
        ("asinh", |g, v| g.asinh(v[0]), -2.0, 2.0),
        ("sqrt", |g, v| g.sqrt(v[0]), 0.2, 2.0),
        ("softplus", |g, v| g.softplus(v[0]), -2.0, 2.0),
        ("abs", |g, v| g.abs(v[0]), 0.1, 2.0),
        ("square", |g, v| g.square(v[0]), -2.0, 2.0),
        ("neg", |g, v| g.neg(v[0]), -2.0, 2.0),
        ("scale", |g, v| g.scale(v[0], 1.7), -2.0, 2.0),
        ("add_scalar", |g, v| g.add_scalar(v[0], 0.3), -2.0, 2.0),
        ("softmax_rows", |g, v| g.softmax_rows(v[0]), -2.0, 2.0),
        ("transpose", |g, v| g.transpose(v[0]), -2.0, 2.0),
        ("sum_rows", |g, v| g.sum_rows(v[0]), -2.0, 2.0),
        ("sum_cols", |g, v| g.sum_cols(v[0]), -2.0, 2.0),
        ("mean", |g, v| g.mean(v[0]), -2.0, 2.0),
        ("tril", |g, v| g.tril(v[0], false), -2.0, 2.0),
        ("tril_strict", |g, v| g.tril(v[0], true), -2.0, 2.0),
        ("slice_cols", |g, v| g.slice_cols(v[0], 1, 3), -2.0, 2.0),
        ("gather_rows", |g, v| g.gather_rows(v[0], &[2, 0, 0, 1]), -2.0, 2.0),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unary_ops_match_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, op, lo, hi) in unary_cases() {
            let x = rand_tensor(&mut rng, &[3, 4], lo, hi);
            let f = move |g: &mut Graph, v: &[Var]| {
                let o = op(g, v)?;
                weighted(g, o, seed)
            };
            let err = max_grad_error(&f, &[x], STEP).unwrap();
            prop_assert!(err < TOL, "{name}: rel err {err}");
        }
    }

    #[test]
    fn binary_ops_match_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes: [(&[usize], &[usize]); 4] =
            [(&[3, 4], &[3, 4]), (&[3, 4], &[1, 4]), (&[3, 4], &[3, 1]), (&[3, 4], &[])];
        let ops: [(&str, Build); 4] = [
            ("add", |g, v| g.add(v[0], v[1])),
            ("sub", |g, v| g.sub(v[0], v[1])),
            ("mul", |g, v| g.mul(v[0], v[1])),
            ("div", |g, v| g.div(v[0], v[1])),
        ];
        for (sa, sb) in shapes {
            for (name, op) in ops {
                // magnitudes in [0.5, 2] keep both operands usable as
                // denominators
                let a = rand_tensor(&mut rng, sa, 0.5, 2.0)
                    .map(|x| if x > 1.25 { x } else { -x - 0.75 });
                let b = rand_tensor(&mut rng, sb, 0.5, 2.0);
                let f = move |g: &mut Graph, v: &[Var]| {
                    let o = op(g, v)?;
                    weighted(g, o, seed)
                };
                let err = max_grad_error(&f, &[a.clone(), b.clone()], STEP).unwrap();
                prop_assert!(err < TOL, "{name} {sa:?} {sb:?}: {err}");
                // broadcast on the left as well
                let err = max_grad_error(&f, &[b, a], STEP).unwrap();
                prop_assert!(err < TOL, "{name} swapped {sa:?} {sb:?}: {err}");
            }
        }
    }

    #[test]
    fn structural_ops_match_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_tensor(&mut rng, &[3, 4], -2.0, 2.0);
        let b = rand_tensor(&mut rng, &[4, 2], -2.0, 2.0);
        let mm = |g: &mut Graph, v: &[Var]| {
            let o = g.matmul(v[0], v[1])?;
            weighted(g, o, 1)
        };
        prop_assert!(max_grad_error(&mm, &[a.clone(), b], STEP).unwrap() < TOL);

        let c = rand_tensor(&mut rng, &[3, 2], -2.0, 2.0);
        let cat = |g: &mut Graph, v: &[Var]| {
            let o = g.concat_cols(&[v[0], v[1]])?;
            weighted(g, o, 2)
        };
        prop_assert!(max_grad_error(&cat, &[a.clone(), c], STEP).unwrap() < TOL);

        let sq = rand_tensor(&mut rng, &[4, 4], -2.0, 2.0);
        let diag = |g: &mut Graph, v: &[Var]| {
            let d = g.diag(v[0])?;
            let e = g.softplus(d)?;
            let m = g.diag_embed(e)?;
            let p = g.matmul(m, v[0])?;
            weighted(g, p, 3)
        };
        prop_assert!(max_grad_error(&diag, &[sq.clone()], STEP).unwrap() < TOL);

        let mask: Vec<bool> = (0..12).map(|i| i % 3 != 0).collect();
        let other = rand_tensor(&mut rng, &[3, 4], -2.0, 2.0);
        let sel = move |g: &mut Graph, v: &[Var]| {
            let o = g.select(&mask, v[0], v[1])?;
            weighted(g, o, 4)
        };
        prop_assert!(max_grad_error(&sel, &[a.clone(), other], STEP).unwrap() < TOL);

        let resh = |g: &mut Graph, v: &[Var]| {
            let o = g.reshape(v[0], vec![6, 2])?;
            weighted(g, o, 5)
        };
        prop_assert!(max_grad_error(&resh, &[a], STEP).unwrap() < TOL);
    }

    #[test]
    fn log_abs_det_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = rand_tensor(&mut rng, &[4, 4], -1.0, 1.0);
        for i in 0..4 {
            m.data_mut()[i * 5] += 3.0;
        }
        let f = |g: &mut Graph, v: &[Var]| g.log_abs_det(v[0]);
        prop_assert!(max_grad_error(&f, &[m], STEP).unwrap() < TOL);
    }

    #[test]
    fn spectral_norm_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // a dominant direction keeps the top singular value well separated
        let mut m = rand_tensor(&mut rng, &[4, 3], -0.5, 0.5);
        for i in 0..4 {
            for j in 0..3 {
                m.data_mut()[i * 3 + j] += (i as f64 + 1.0) * (3.0 - j as f64) * 0.5;
            }
        }
        let f = |g: &mut Graph, v: &[Var]| g.spectral_norm(v[0]);
        // power iteration stops at a relative tolerance, which bounds how
        // well the singular vectors are resolved
        prop_assert!(max_grad_error(&f, &[m], STEP).unwrap() < 1e-4);
    }

    #[test]
    fn composite_graph_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, &[3, 4], -2.0, 2.0);
        let w = rand_tensor(&mut rng, &[4, 4], -1.0, 1.0);
        let b = rand_tensor(&mut rng, &[1, 4], -1.0, 1.0);
        let f = |g: &mut Graph, v: &[Var]| {
            let h = g.matmul(v[0], v[1])?;
            let h = g.add(h, v[2])?;
            let h = g.tanh(h)?;
            let s = g.softmax_rows(h)?;
            let t = g.transpose(s)?;
            let a = g.matmul(v[0], t)?;
            let l = g.tril(a, true)?;
            let e = g.exp(l)?;
            let q = g.asinh(e)?;
            let m = g.mean(q)?;
            let sp = g.softplus(m)?;
            g.log(sp)
        };
        prop_assert!(max_grad_error(&f, &[x, w, b], STEP).unwrap() < TOL);
    }
}

#[test]
fn quadratic_gradient() {
    let mut g = Graph::new();
    let p = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let sq = g.mul(p, p).unwrap();
    let loss = g.sum(sq).unwrap();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(p).unwrap().data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn tanh_derivative_at_zero() {
    let mut g = Graph::new();
    let x = g.scalar(0.0);
    let y = g.tanh(x).unwrap();
    let grads = g.backward(y).unwrap();
    assert_eq!(grads.get(x).unwrap().item(), 1.0);
}

#[test]
fn forward_examples() {
    let mut g = Graph::new();
    let eye = g.constant(Tensor::identity(2));
    let b = g.constant(Tensor::from_rows(&[vec![2.0], vec![3.0]]).unwrap());
    let p = g.matmul(eye, b).unwrap();
    assert_eq!(g.value(p).data(), &[2.0, 3.0]);

    let z = g.scalar(0.0);
    let sp = g.softplus(z).unwrap();
    assert!((g.value(sp).item() - 2f64.ln()).abs() < 1e-15);

    let x = g.scalar(1.5);
    let s = g.sinh(x).unwrap();
    let back = g.asinh(s).unwrap();
    assert!((g.value(back).item() - 1.5).abs() < 1e-15);
}

#[test]
fn shape_errors_name_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2, 3]));
    let err = g.matmul(a, b).unwrap_err();
    assert_eq!(
        err,
        AdError::ShapeMismatch {
            op: "matmul",
            lhs: vec![2, 3],
            rhs: vec![2, 3]
        }
    );
    let c = g.constant(Tensor::zeros(&[4, 5]));
    assert!(matches!(g.add(a, c), Err(AdError::ShapeMismatch { op: "add", .. })));
    let msg = g.add(a, c).unwrap_err().to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[4, 5]"), "{msg}");
}

#[test]
fn domain_errors() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![1.0, 0.0]));
    assert!(matches!(g.log(x), Err(AdError::Domain { op: "log", .. })));
    let y = g.constant(Tensor::vector(vec![-1.0]));
    assert!(matches!(g.sqrt(y), Err(AdError::Domain { op: "sqrt", .. })));
    let big = g.scalar(800.0);
    assert!(matches!(g.exp(big), Err(AdError::NonFinite { op: "exp" })));
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![1.0, 2.0]));
    assert_eq!(g.backward(x).unwrap_err(), AdError::NonScalarLoss(vec![2]));
}

#[test]
fn backward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut g = Graph::new();
    let x = g.constant(rand_tensor(&mut rng, &[5, 3], -2.0, 2.0));
    let w = g.constant(rand_tensor(&mut rng, &[3, 3], -2.0, 2.0));
    let h = g.matmul(x, w).unwrap();
    let h = g.tanh(h).unwrap();
    let s = g.softmax_rows(h).unwrap();
    let l = g.sum(s).unwrap();
    let l = g.scale(l, 0.5).unwrap();
    let first = g.backward(l).unwrap();
    let second = g.backward(l).unwrap();
    assert_eq!(first.get(x), second.get(x));
    assert_eq!(first.get(w), second.get(w));
}

#[test]
fn rel_err_floor() {
    assert_eq!(rel_err(0.0, 0.0), 0.0);
    assert!(rel_err(1.0, 1.0 + 1e-9) < 1e-8);
}
