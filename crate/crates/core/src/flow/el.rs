//! Elementwise linear layer `y_k * scale(x_k) + shift(x_k)`.
//!
//! The scale network ends in `exp(tanh(.))`, so every scale lies in
//! `[1/e, e]` and the layer is always invertible.

use profiti_autodiff::{Graph, Tensor, Var};

use crate::error::Result;

pub fn el_fwd(y: f64, scale: f64, shift: f64) -> f64 {
    y * scale + shift
}

pub fn el_inv(v: f64, scale: f64, shift: f64) -> f64 {
    (v - shift) / scale
}

pub fn el_logdet_term(scale: f64) -> f64 {
    scale.ln()
}

/// Graph handles of a one-hidden-layer tanh network `R^d -> R`.
#[derive(Clone, Copy, Debug)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// `tanh(x W1 + b1) W2 + b2` for each row of `x`; returns `[K, 1]`.
pub fn mlp_node(g: &mut Graph, x: Var, m: &MlpVars) -> Result<Var> {
    let h = g.matmul(x, m.w1)?;
    let h = g.add(h, m.b1)?;
    let h = g.tanh(h)?;
    let o = g.matmul(h, m.w2)?;
    Ok(g.add(o, m.b2)?)
}

/// Log-scale `tanh(NN_sca(x))` and shift `NN_trs(x)`, both `[K, 1]`.
/// Without a scale network the scale is fixed to one.
pub fn el_scale_shift_node(
    g: &mut Graph,
    x: Var,
    sca: Option<&MlpVars>,
    trs: &MlpVars,
) -> Result<(Option<Var>, Var)> {
    let log_scale = match sca {
        Some(m) => {
            let a = mlp_node(g, x, m)?;
            Some(g.tanh(a)?)
        }
        None => None,
    };
    let shift = mlp_node(g, x, trs)?;
    Ok((log_scale, shift))
}

/// Plain weights of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl Mlp {
    fn vars(&self, g: &mut Graph) -> MlpVars {
        MlpVars {
            w1: g.constant(self.w1.clone()),
            b1: g.constant(self.b1.clone()),
            w2: g.constant(self.w2.clone()),
            b2: g.constant(self.b2.clone()),
        }
    }
}

/// Scale and translation networks of one EL layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ElParams {
    pub sca: Mlp,
    pub trs: Mlp,
}

impl ElParams {
    /// Per-row `(scale, shift)` for a condition matrix `x`.
    pub fn scale_shift(&self, x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let sca = self.sca.vars(&mut g);
        let trs = self.trs.vars(&mut g);
        let (ls, sh) = el_scale_shift_node(&mut g, xv, Some(&sca), &trs)?;
        let ls = ls.expect("scale network present");
        let scale = g.value(ls).data().iter().map(|a| a.exp()).collect();
        Ok((scale, g.value(sh).data().to_vec()))
    }

    pub fn fwd(&self, y: &[f64], x: &Tensor) -> Result<super::FlowState> {
        let (scale, shift) = self.scale_shift(x)?;
        let values = y
            .iter()
            .zip(scale.iter().zip(&shift))
            .map(|(&y, (&s, &t))| el_fwd(y, s, t))
            .collect();
        let logdet = scale.iter().map(|&s| el_logdet_term(s)).sum();
        Ok(super::FlowState { values, logdet })
    }

    pub fn inv(&self, v: &[f64], x: &Tensor) -> Result<super::FlowState> {
        let (scale, shift) = self.scale_shift(x)?;
        let values = v
            .iter()
            .zip(scale.iter().zip(&shift))
            .map(|(&v, (&s, &t))| el_inv(v, s, t))
            .collect();
        let logdet = -scale.iter().map(|&s| el_logdet_term(s)).sum::<f64>();
        Ok(super::FlowState { values, logdet })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_t(rng: &mut ChaCha8Rng, r: usize, c: usize, s: f64) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-s..s)).collect()).unwrap()
    }

    fn rand_mlp(rng: &mut ChaCha8Rng, d: usize, s: f64) -> Mlp {
        Mlp {
            w1: rand_t(rng, d, d, s),
            b1: rand_t(rng, 1, d, s),
            w2: rand_t(rng, d, 1, s),
            b2: rand_t(rng, 1, 1, s),
        }
    }

    #[test]
    fn identity_when_scale_one_shift_zero() {
        assert_eq!(el_fwd(1.7, 1.0, 0.0), 1.7);
        assert_eq!(el_logdet_term(1.0), 0.0);
        let zero = Mlp {
            w1: Tensor::zeros(&[3, 3]),
            b1: Tensor::zeros(&[1, 3]),
            w2: Tensor::zeros(&[3, 1]),
            b2: Tensor::zeros(&[1, 1]),
        };
        let p = ElParams {
            sca: zero.clone(),
            trs: zero,
        };
        let x = Tensor::filled(&[2, 3], 0.4);
        let st = p.fwd(&[0.5, -2.0], &x).unwrap();
        assert_eq!(st.values, vec![0.5, -2.0]);
        assert_eq!(st.logdet, 0.0);
    }

    #[test]
    fn round_trip_random_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let p = ElParams {
                sca: rand_mlp(&mut rng, 4, 1.5),
                trs: rand_mlp(&mut rng, 4, 1.5),
            };
            let x = rand_t(&mut rng, 5, 4, 2.0);
            let y: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let f = p.fwd(&y, &x).unwrap();
            let b = p.inv(&f.values, &x).unwrap();
            for (a, e) in b.values.iter().zip(&y) {
                assert!((a - e).abs() < 1e-10);
            }
            assert!((f.logdet + b.logdet).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = std::f64::consts::E;
        let mut n = 0;
        while n < 10_000 {
            let p = ElParams {
                sca: rand_mlp(&mut rng, 3, 5.0),
                trs: rand_mlp(&mut rng, 3, 1.0),
            };
            let x = rand_t(&mut rng, 100, 3, 10.0);
            let (scale, _) = p.scale_shift(&x).unwrap();
            for s in scale {
                assert!((1.0 / e..=e).contains(&s), "{s}");
            }
            n += 100;
        }
    }
}
