//! Synthetic IMTS datasets with known dependence structure.
//!
//! All families share a latent `C`-channel process with unit marginal
//! variance and cross-channel correlation `correlation`:
//!
//! * `gaussian-ou`: each channel decays deterministically from a random
//!   correlated start, `x_c(t) = x_c(0) exp(-theta t)`, plus i.i.d.
//!   Gaussian noise. Given the start, answers are independent.
//! * `correlated-heavytail`: a stationary multivariate Ornstein-Uhlenbeck
//!   process pushed through `sinh(tail * x)`, giving heavy-tailed,
//!   cross-channel and temporally correlated answers.
//! * `multimodal`: the same OU process plus a hidden per-series jump of
//!   `+-mode_gap` that is only present in the forecast window.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Observation, Query, SeriesInstance};
use crate::error::{ProfitiError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessFamily {
    GaussianOu,
    CorrelatedHeavytail,
    Multimodal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_series: usize,
    pub channels: usize,
    /// Observation time points per series, drawn uniformly in the
    /// observation window.
    pub obs_times: usize,
    /// Query time points per series, drawn uniformly in the horizon.
    pub query_times: usize,
    /// Probability that a `(time, channel)` cell is missing.
    pub missing_fraction: f64,
    /// Observation window is `[0, horizon_split)`, queries fall in
    /// `(horizon_split, 1]`.
    pub horizon_split: f64,
    pub max_queries: usize,
    pub family: ProcessFamily,
    pub correlation: f64,
    pub mean_reversion: f64,
    pub noise: f64,
    pub tail: f64,
    pub mode_gap: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_series: 1000,
            channels: 3,
            obs_times: 12,
            query_times: 3,
            missing_fraction: 0.2,
            horizon_split: 0.75,
            max_queries: 8,
            family: ProcessFamily::CorrelatedHeavytail,
            correlation: 0.8,
            mean_reversion: 1.0,
            noise: 0.05,
            tail: 1.0,
            mode_gap: 1.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ProfitiError::Config(m.to_string()));
        if self.channels == 0 {
            return bad("channels must be positive");
        }
        if self.obs_times == 0 || self.query_times == 0 || self.max_queries == 0 {
            return bad("obs_times, query_times and max_queries must be positive");
        }
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return bad("missing_fraction must be in [0, 1): every series needs an observation");
        }
        if !(self.horizon_split > 0.0 && self.horizon_split < 1.0) {
            return bad("horizon_split must be in (0, 1)");
        }
        let lower = if self.channels > 1 {
            -1.0 / (self.channels as f64 - 1.0)
        } else {
            -1.0
        };
        if !(self.correlation > lower && self.correlation < 1.0) {
            return bad("correlation must keep the channel covariance positive definite");
        }
        if !(self.mean_reversion > 0.0) || self.noise < 0.0 || !(self.tail > 0.0) {
            return bad("mean_reversion and tail must be positive, noise non-negative");
        }
        Ok(())
    }
}

/// Cholesky factor of the equicorrelation matrix, row-major lower
/// triangle.
fn equicorrelation_cholesky(c: usize, rho: f64) -> Vec<f64> {
    let mut l = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..=i {
            let target = if i == j { 1.0 } else { rho };
            let s: f64 = (0..j).map(|k| l[i * c + k] * l[j * c + k]).sum();
            if i == j {
                l[i * c + i] = (target - s).sqrt();
            } else {
                l[i * c + j] = (target - s) / l[j * c + j];
            }
        }
    }
    l
}

struct Latent {
    chol: Vec<f64>,
    c: usize,
}

impl Latent {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let xi: Vec<f64> = (0..self.c).map(|_| StandardNormal.sample(rng)).collect();
        (0..self.c)
            .map(|i| (0..=i).map(|k| self.chol[i * self.c + k] * xi[k]).sum())
            .collect()
    }
}

/// Average pairwise correlation of `n` stationary latent draws.
pub fn empirical_channel_correlation(cfg: &SyntheticConfig, n: usize, seed: u64) -> f64 {
    let c = cfg.channels;
    let latent = Latent {
        chol: equicorrelation_cholesky(c, cfg.correlation),
        c,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<f64>> = (0..n).map(|_| latent.draw(&mut rng)).collect();
    let mean: Vec<f64> = (0..c)
        .map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / n as f64)
        .collect();
    let cov = |a: usize, b: usize| {
        draws
            .iter()
            .map(|d| (d[a] - mean[a]) * (d[b] - mean[b]))
            .sum::<f64>()
            / n as f64
    };
    let mut total = 0.0;
    let mut pairs = 0;
    for a in 0..c {
        for b in a + 1..c {
            total += cov(a, b) / (cov(a, a) * cov(b, b)).sqrt();
            pairs += 1;
        }
    }
    if pairs == 0 {
        1.0
    } else {
        total / pairs as f64
    }
}

fn sorted_uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Generate a reproducible dataset.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<SeriesInstance>> {
    cfg.validate()?;
    let c = cfg.channels;
    let latent = Latent {
        chol: equicorrelation_cholesky(c, cfg.correlation),
        c,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = (cfg.n_series.max(1) - 1).to_string().len();
    let mut out = Vec::with_capacity(cfg.n_series);
    for n in 0..cfg.n_series {
        let obs_t = sorted_uniform(&mut rng, cfg.obs_times, 0.0, cfg.horizon_split);
        // Keep queries strictly inside the horizon.
        let qry_t = sorted_uniform(&mut rng, cfg.query_times, cfg.horizon_split, 1.0)
            .into_iter()
            .map(|t| if t <= cfg.horizon_split { cfg.horizon_split + 1e-9 } else { t })
            .collect::<Vec<_>>();

        let times: Vec<f64> = obs_t.iter().chain(&qry_t).copied().collect();
        let path = simulate(cfg, &latent, &times, &mut rng);
        let jump = match cfg.family {
            ProcessFamily::Multimodal => {
                if rng.random::<bool>() {
                    cfg.mode_gap
                } else {
                    -cfg.mode_gap
                }
            }
            _ => 0.0,
        };
        let value = |rng: &mut ChaCha8Rng, x: f64, future: bool| -> f64 {
            let eps: f64 = StandardNormal.sample(rng);
            let base = match cfg.family {
                ProcessFamily::GaussianOu => x,
                ProcessFamily::CorrelatedHeavytail => (cfg.tail * x).sinh(),
                ProcessFamily::Multimodal => x + if future { jump } else { 0.0 },
            };
            base + cfg.noise * eps
        };

        let mut observations = Vec::new();
        for (i, &t) in obs_t.iter().enumerate() {
            for ch in 0..c {
                let keep = rng.random::<f64>() >= cfg.missing_fraction;
                let v = value(&mut rng, path[i][ch], false);
                if keep {
                    observations.push(Observation {
                        t,
                        channel: ch,
                        value: v,
                    });
                }
            }
        }
        if observations.is_empty() {
            let i = rng.random_range(0..obs_t.len());
            let ch = rng.random_range(0..c);
            let v = value(&mut rng, path[i][ch], false);
            observations.push(Observation {
                t: obs_t[i],
                channel: ch,
                value: v,
            });
        }

        let mut cells = Vec::new();
        for (i, &t) in qry_t.iter().enumerate() {
            for ch in 0..c {
                let keep = rng.random::<f64>() >= cfg.missing_fraction;
                let v = value(&mut rng, path[obs_t.len() + i][ch], true);
                if keep {
                    cells.push((Query { t, channel: ch }, v));
                }
            }
        }
        if cells.is_empty() {
            let i = rng.random_range(0..qry_t.len());
            let ch = rng.random_range(0..c);
            let v = value(&mut rng, path[obs_t.len() + i][ch], true);
            cells.push((Query { t: qry_t[i], channel: ch }, v));
        }
        if cells.len() > cfg.max_queries {
            let mut keep = index::sample(&mut rng, cells.len(), cfg.max_queries).into_vec();
            keep.sort_unstable();
            cells = keep.into_iter().map(|i| cells[i]).collect();
        }
        let (queries, answers): (Vec<Query>, Vec<f64>) = cells.into_iter().unzip();
        let series = SeriesInstance {
            id: format!("syn-{n:0width$}"),
            channels: c,
            observations,
            queries,
            answers: Some(answers),
        };
        series.validate()?;
        out.push(series);
    }
    Ok(out)
}

/// Latent values at the (sorted) `times`.
fn simulate(cfg: &SyntheticConfig, latent: &Latent, times: &[f64], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let theta = cfg.mean_reversion;
    match cfg.family {
        ProcessFamily::GaussianOu => {
            let x0 = latent.draw(rng);
            times
                .iter()
                .map(|&t| x0.iter().map(|x| x * (-theta * t).exp()).collect())
                .collect()
        }
        ProcessFamily::CorrelatedHeavytail | ProcessFamily::Multimodal => {
            // exact discretization of a unit-variance OU process
            let mut x = latent.draw(rng);
            let mut prev = 0.0;
            let mut path = Vec::with_capacity(times.len());
            for &t in times {
                let a = (-theta * (t - prev)).exp();
                let s = (1.0 - a * a).sqrt();
                let xi = latent.draw(rng);
                x = x.iter().zip(&xi).map(|(x, e)| a * x + s * e).collect();
                path.push(x.clone());
                prev = t;
            }
            path
        }
    }
}
