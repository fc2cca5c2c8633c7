mod common;

use common::*;
use profiti::data::{Permutation, SeriesInstance};
use profiti::flow::attention::AttnKind;
use profiti::flow::shiesh::{shiesh_dfwd, shiesh_fwd};
use profiti::model::{ForecastModel, Profiti, VariantFlags};
use profiti::ProfitiError;
use profiti_autodiff::check::rel_err;
use profiti_autodiff::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;

const GAUSS: VariantFlags = VariantFlags {
    use_sita: false,
    attn_kind: AttnKind::Tri,
    use_shiesh: false,
};

fn all_variants() -> Vec<VariantFlags> {
    let mut v = Vec::new();
    for (use_sita, attn_kind) in [(true, AttnKind::Tri), (true, AttnKind::Reg), (true, AttnKind::Itrans), (false, AttnKind::Tri)] {
        for use_shiesh in [true, false] {
            v.push(VariantFlags {
                use_sita,
                attn_kind,
                use_shiesh,
            });
        }
    }
    v
}

fn with_answers(inst: &SeriesInstance, y: Vec<f64>) -> SeriesInstance {
    SeriesInstance {
        answers: Some(y),
        ..inst.clone()
    }
}

#[test]
fn identity_model_at_origin() {
    let mut m = small_model(2, GAUSS, 1);
    scale_flow_params(&mut m, 0.0);
    let mut r = rng(1);
    let inst = with_answers(&random_instance(&mut r, 3, 6, 2), vec![0.0, 0.0]);
    let res = m.log_density(&inst, &[0.0, 0.0]).unwrap();
    assert!((res.log_density + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    assert!((m.joint_nll(&inst).unwrap() - 0.918_938_533_204_672_7).abs() < 1e-12);
}

#[test]
fn zero_parameter_full_model_matches_closed_form() {
    let blocks = 3;
    let mut m = small_model(blocks, VariantFlags::default(), 2);
    scale_flow_params(&mut m, 0.0);
    let mut r = rng(2);
    let inst = random_instance(&mut r, 3, 8, 4);
    let y = inst.answers.clone().unwrap();
    // attention reduces to (ln 2 + eps) I, EL to the identity
    let c = 2f64.ln() + 1e-5;
    let mut expect = -0.5 * 4.0 * (2.0 * std::f64::consts::PI).ln();
    for &yk in &y {
        let mut u = yk;
        for _ in 0..blocks {
            u *= c;
            expect += c.ln() + shiesh_dfwd(u, 1.0).ln();
            u = shiesh_fwd(u, 1.0);
        }
        expect -= 0.5 * u * u;
    }
    let got = m.log_density(&inst, &y).unwrap().log_density;
    assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
}

fn latent(m: &Profiti, inst: &SeriesInstance, y: &[f64]) -> Vec<f64> {
    m.log_density(inst, y).unwrap().z
}

#[test]
fn logdet_matches_numerical_jacobian() {
    let mut r = rng(3);
    for (i, flags) in all_variants().into_iter().enumerate() {
        let mut m = small_model(2, flags, 10 + i as u64);
        scale_flow_params(&mut m, 3.0);
        for k in 1..=4 {
            let inst = random_instance(&mut r, 3, 6, k);
            let y = inst.answers.clone().unwrap();
            let res = m.log_density(&inst, &y).unwrap();
            let logdet: f64 = res.per_layer_logdets.iter().sum();
            let h = 1e-6;
            let mut jac = vec![vec![0.0; k]; k];
            for j in 0..k {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[j] += h;
                ym[j] -= h;
                let (zp, zm) = (latent(&m, &inst, &yp), latent(&m, &inst, &ym));
                for i in 0..k {
                    jac[i][j] = (zp[i] - zm[i]) / (2.0 * h);
                }
            }
            let numeric = laplace_det(&jac).abs().ln();
            assert!(
                rel_err(logdet, numeric) < 1e-4,
                "{flags:?} K={k}: {logdet} vs {numeric}"
            );
            let base: f64 = res.z.iter().map(|z| -0.5 * z * z).sum::<f64>()
                - 0.5 * k as f64 * (2.0 * std::f64::consts::PI).ln();
            assert!((res.log_density - base - logdet).abs() < 1e-10);
        }
    }
}

#[test]
fn joint_density_is_permutation_invariant() {
    let mut r = rng(4);
    for (i, flags) in all_variants().into_iter().enumerate() {
        let m = small_model(2, flags, 20 + i as u64);
        let inst = random_instance(&mut r, 3, 10, 6);
        let base = m.joint_log_density(&inst).unwrap();
        for _ in 0..50 {
            let mut idx: Vec<usize> = (0..6).collect();
            idx.shuffle(&mut r);
            let p = inst.permuted(&Permutation::new(idx).unwrap()).unwrap();
            let v = m.joint_log_density(&p).unwrap();
            assert!((v - base).abs() < 1e-8, "{flags:?}: {v} vs {base}");
        }
    }
}

#[test]
fn density_integrates_to_one() {
    let mut m = small_model(2, VariantFlags::default(), 5);
    scale_flow_params(&mut m, 2.0);
    let mut r = rng(5);
    let inst = random_instance(&mut r, 3, 8, 2);
    let flow = m.condition(&inst).unwrap();
    let n = 400;
    let h = 16.0 / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let y = [-8.0 + (i as f64 + 0.5) * h, -8.0 + (j as f64 + 0.5) * h];
            total += flow.log_density(&y).unwrap().log_density.exp() * h * h;
        }
    }
    assert!((0.98..=1.02).contains(&total), "integral {total}");
}

#[test]
fn graph_density_matches_plain_path() {
    let mut r = rng(6);
    for (i, flags) in all_variants().into_iter().enumerate() {
        let m = small_model(3, flags, 30 + i as u64);
        let inst = random_instance(&mut r, 3, 7, 5);
        let mut g = Graph::new();
        let node = m.log_density_node(&mut g, &inst).unwrap();
        let plain = m.joint_log_density(&inst).unwrap();
        assert!((g.value(node).item() - plain).abs() < 1e-10, "{flags:?}");
    }
}

#[test]
fn gradients_match_finite_differences_per_group() {
    let mut r = rng(7);
    let mut m = small_model(2, VariantFlags::default(), 8);
    scale_flow_params(&mut m, 2.0);
    let inst = random_instance(&mut r, 3, 6, 3);
    let (_, grads) = m.loss_and_grads(&inst).unwrap();
    let ids: Vec<_> = m.store().ids().collect();
    for id in ids {
        let name = m.store().name(id).to_string();
        let n = m.store().get(id).numel();
        let analytic = grads.get(id).data().to_vec();
        // a few coordinates per group keeps the check fast
        let picks: Vec<usize> = (0..n.min(4)).map(|_| r.random_range(0..n)).collect();
        for i in picks {
            let h = 1e-5;
            let orig = m.store().get(id).data()[i];
            m.store_mut().get_mut(id).data_mut()[i] = orig + h;
            let fp = m.joint_nll(&inst).unwrap();
            m.store_mut().get_mut(id).data_mut()[i] = orig - h;
            let fm = m.joint_nll(&inst).unwrap();
            m.store_mut().get_mut(id).data_mut()[i] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let err = rel_err(analytic[i], numeric);
            assert!(err < 1e-3, "{name}[{i}]: {} vs {numeric}", analytic[i]);
        }
    }
}

#[test]
fn sampling_round_trips_through_density() {
    let mut r = rng(8);
    for (i, flags) in all_variants().into_iter().enumerate() {
        let mut m = small_model(3, flags, 40 + i as u64);
        scale_flow_params(&mut m, 2.0);
        let inst = random_instance(&mut r, 3, 7, 5);
        let flow = m.condition(&inst).unwrap();
        for _ in 0..20 {
            let z: Vec<f64> = (0..5).map(|_| r.sample(rand_distr::StandardNormal)).collect();
            let y = flow.sample_from_latent(&z).unwrap();
            let back = flow.log_density(&y).unwrap().z;
            for (a, b) in back.iter().zip(&z) {
                assert!((a - b).abs() < 1e-6, "{flags:?}");
            }
        }
    }
}

#[test]
fn single_sample_is_deterministic_per_seed() {
    let m = small_model(2, VariantFlags::default(), 9);
    let mut r = rng(9);
    let inst = random_instance(&mut r, 3, 7, 4);
    let a = m.sample(&inst, 1, &mut rng(100)).unwrap();
    let b = m.sample(&inst, 1, &mut rng(100)).unwrap();
    assert_eq!(a, b);
    assert!(m.sample(&inst, 0, &mut rng(100)).is_err());
}

#[test]
fn affine_model_sample_mean_matches_shift() {
    let mut m = small_model(1, GAUSS, 10);
    scale_flow_params(&mut m, 0.0);
    set_param(&mut m, "flow.init.trs.b2", Tensor::from_rows(&[vec![0.5]]).unwrap());
    set_param(&mut m, "flow.b0.trs.b2", Tensor::from_rows(&[vec![0.3]]).unwrap());
    let mut r = rng(10);
    let inst = random_instance(&mut r, 3, 5, 2);
    let n = 10_000;
    let samples = m.sample(&inst, n, &mut r).unwrap();
    for k in 0..2 {
        let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n as f64;
        assert!((mean + 0.8).abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
    }
}

#[test]
fn marginals_equal_joint_without_attention() {
    let mut r = rng(11);
    let m = small_model(2, VariantFlags { use_shiesh: true, ..GAUSS }, 11);
    let inst = random_instance(&mut r, 3, 7, 5);
    let flow = m.condition(&inst).unwrap();
    let y = inst.answers.clone().unwrap();
    let marg = flow.marginal_log_densities(&y).unwrap();
    let joint = flow.log_density(&y).unwrap().log_density;
    assert!((marg.iter().sum::<f64>() - joint).abs() < 1e-12);
    for k in 0..5 {
        let single = SeriesInstance {
            queries: vec![inst.queries[k]],
            answers: Some(vec![y[k]]),
            ..inst.clone()
        };
        assert!((m.joint_log_density(&single).unwrap() - marg[k]).abs() < 1e-12);
    }
}

#[test]
fn zeroing_off_diagonals_changes_the_density() {
    let mut r = rng(12);
    let mut m = small_model(2, VariantFlags::default(), 12);
    scale_flow_params(&mut m, 3.0);
    let inst = random_instance(&mut r, 3, 7, 4);
    let marg: f64 = m.marginal_log_densities(&inst).unwrap().iter().sum();
    let joint = m.joint_log_density(&inst).unwrap();
    assert!((marg - joint).abs() > 1e-6);

    let one = random_instance(&mut r, 3, 7, 1);
    let a = m.marginal_log_densities(&one).unwrap()[0];
    assert!((a - m.joint_log_density(&one).unwrap()).abs() < 1e-12);
}

#[test]
fn contradictory_flags_are_rejected() {
    let flags = VariantFlags {
        use_sita: false,
        attn_kind: AttnKind::Reg,
        use_shiesh: true,
    };
    let err = Profiti::new(small_config(2, flags), 3, profiti::data::ChannelStats::identity(3), 0).unwrap_err();
    assert!(matches!(err, ProfitiError::Config(_)));
    let zero = small_config(0, VariantFlags::default());
    assert!(Profiti::new(zero, 3, profiti::data::ChannelStats::identity(3), 0).is_err());
}

#[test]
fn overflowing_answers_name_a_block() {
    let m = small_model(2, VariantFlags::default(), 13);
    let mut r = rng(13);
    let inst = random_instance(&mut r, 3, 5, 3);
    let err = m.log_density(&inst, &[1e308, -1e308, 1e308]).unwrap_err();
    assert!(matches!(err, ProfitiError::NonFinite { .. }), "{err}");
    assert!(err.to_string().contains("block"));
}

#[test]
fn wrong_answer_length_is_an_error() {
    let m = small_model(1, VariantFlags::default(), 14);
    let mut r = rng(14);
    let inst = random_instance(&mut r, 3, 5, 3);
    assert!(matches!(m.log_density(&inst, &[0.0]), Err(ProfitiError::Length { .. })));
}
