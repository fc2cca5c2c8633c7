#![allow(dead_code)]

use profiti::data::{ChannelStats, Observation, Query, SeriesInstance};
use profiti::encoder::EncoderConfig;
use profiti::model::{ModelConfig, Profiti, VariantFlags};
use profiti_autodiff::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random instance with `k` queries spread over `channels` channels.
pub fn random_instance(rng: &mut ChaCha8Rng, channels: usize, n_obs: usize, k: usize) -> SeriesInstance {
    let mut observations = Vec::new();
    let mut used = std::collections::HashSet::new();
    while observations.len() < n_obs {
        let t = rng.random_range(0..50) as f64 * 0.01;
        let c = rng.random_range(0..channels);
        if used.insert((t.to_bits(), c)) {
            observations.push(Observation {
                t,
                channel: c,
                value: rng.random_range(-2.0..2.0),
            });
        }
    }
    let mut queries = Vec::new();
    let mut used = std::collections::HashSet::new();
    while queries.len() < k {
        let t = 0.6 + rng.random_range(0..20) as f64 * 0.02;
        let c = rng.random_range(0..channels);
        if used.insert((t.to_bits(), c)) {
            queries.push(Query { t, channel: c });
        }
    }
    let answers = Some((0..k).map(|_| rng.random_range(-1.5..1.5)).collect());
    SeriesInstance {
        id: "rand".into(),
        channels,
        observations,
        queries,
        answers,
    }
}

pub fn small_config(blocks: usize, flags: VariantFlags) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            d: 8,
            layers: 1,
            heads: 2,
            n_freqs: 3,
            max_freq: 10.0,
            d_channel: 3,
            d_value: 3,
        },
        blocks,
        flags,
        ..ModelConfig::default()
    }
}

pub fn small_model(blocks: usize, flags: VariantFlags, seed: u64) -> Profiti {
    Profiti::new(small_config(blocks, flags), 3, ChannelStats::identity(3), seed).unwrap()
}

/// Multiply every flow parameter by `factor` (0 gives the closed-form
/// initial state).
pub fn scale_flow_params(model: &mut Profiti, factor: f64) {
    let store = model.store_mut();
    let ids: Vec<_> = store.iter().filter(|(_, n, _)| n.starts_with("flow.")).map(|(id, _, _)| id).collect();
    for id in ids {
        let t = store.get_mut(id);
        *t = t.map(|v| v * factor);
    }
}

pub fn set_param(model: &mut Profiti, name: &str, value: Tensor) {
    let store = model.store_mut();
    let id = store.id(name).unwrap();
    *store.get_mut(id) = value;
}

/// Determinant by Laplace expansion, independent of the library's LU.
pub fn laplace_det(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    (0..n)
        .map(|j| {
            let minor: Vec<Vec<f64>> = m[1..]
                .iter()
                .map(|r| r.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| *v).collect())
                .collect();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * m[0][j] * laplace_det(&minor)
        })
        .sum()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
