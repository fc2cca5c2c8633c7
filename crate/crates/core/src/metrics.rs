//! Evaluation metrics over a dataset of instances with answers.
//!
//! * njNLL: mean over instances of `-(1/K) log p(y)`.
//! * mNLL: per-query marginal NLL summed over the whole set and divided by
//!   the total number of queries. Instances with more queries weigh more,
//!   unlike njNLL.
//! * CRPS: `mean|x_i - y| - 1/2 mean_{i,j}|x_i - x_j|` over model samples,
//!   averaged over queries.
//! * Robust MSE: squared error of the sample mean after dropping samples
//!   outside `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`, averaged over queries.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SeriesInstance;
use crate::error::{ProfitiError, Result};
use crate::model::ForecastModel;

pub const DEFAULT_SAMPLES: usize = 100;

fn nonempty(data: &[SeriesInstance]) -> Result<()> {
    if data.is_empty() {
        Err(ProfitiError::EmptyDataset)
    } else {
        Ok(())
    }
}

/// Sampling stream for instance `index`, independent of evaluation order.
pub fn instance_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn njnll<M: ForecastModel>(data: &[SeriesInstance], model: &M) -> Result<f64> {
    nonempty(data)?;
    let per: Vec<f64> = data
        .par_iter()
        .map(|s| Ok(-model.joint_log_density(s)? / s.num_queries() as f64))
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

pub fn mnll<M: ForecastModel>(data: &[SeriesInstance], model: &M) -> Result<f64> {
    nonempty(data)?;
    let per: Vec<Vec<f64>> = data
        .par_iter()
        .map(|s| model.marginal_log_densities(s))
        .collect::<Result<_>>()?;
    let total: f64 = per.iter().flatten().sum();
    let count: usize = per.iter().map(Vec::len).sum();
    Ok(-total / count as f64)
}

/// V-statistic CRPS estimate for one query.
pub fn crps_samples(samples: &[f64], y: f64) -> f64 {
    let n = samples.len() as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let abs_err = sorted.iter().map(|x| (x - y).abs()).sum::<f64>() / n;
    // sum_{i,j} |x_i - x_j| = 2 sum_i (2i - n + 1) x_(i)
    let spread: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * i as f64 - n + 1.0) * x)
        .sum::<f64>()
        * 2.0
        / (n * n);
    abs_err - 0.5 * spread
}

/// Quantile of sorted data with linear interpolation between order
/// statistics (position `q (n - 1)`).
pub fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean of the samples inside the Tukey fences; the plain mean if none are.
pub fn robust_mean(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile_linear(&sorted, 0.25), quantile_linear(&sorted, 0.75));
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let kept: Vec<f64> = sorted.iter().copied().filter(|x| (lo..=hi).contains(x)).collect();
    if kept.is_empty() {
        log::warn!("all {} samples fell outside the outlier fences; using the plain mean", samples.len());
        return sorted.iter().sum::<f64>() / sorted.len() as f64;
    }
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// Per-query sample statistics of one instance.
struct SampleScores {
    crps: Vec<f64>,
    robust_mean: Vec<f64>,
}

fn sample_scores<M: ForecastModel>(
    inst: &SeriesInstance,
    model: &M,
    n_samples: usize,
    seed: u64,
    index: usize,
) -> Result<SampleScores> {
    let y = inst.answers()?;
    let samples = model.sample(inst, n_samples, &mut instance_rng(seed, index))?;
    let mut out = SampleScores {
        crps: Vec::with_capacity(y.len()),
        robust_mean: Vec::with_capacity(y.len()),
    };
    for (k, &yk) in y.iter().enumerate() {
        let col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
        out.crps.push(crps_samples(&col, yk));
        out.robust_mean.push(robust_mean(&col));
    }
    Ok(out)
}

fn check_samples(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min {
        return Err(ProfitiError::Config(format!("{what} needs at least {min} samples, got {n}")));
    }
    Ok(())
}

pub fn crps<M: ForecastModel>(data: &[SeriesInstance], model: &M, n_samples: usize, seed: u64) -> Result<f64> {
    nonempty(data)?;
    check_samples(n_samples, 2, "CRPS")?;
    let per: Vec<SampleScores> = data
        .par_iter()
        .enumerate()
        .map(|(i, s)| sample_scores(s, model, n_samples, seed, i))
        .collect::<Result<_>>()?;
    let all: Vec<f64> = per.iter().flat_map(|p| p.crps.iter().copied()).collect();
    Ok(all.iter().sum::<f64>() / all.len() as f64)
}

pub fn mse_robust<M: ForecastModel>(data: &[SeriesInstance], model: &M, n_samples: usize, seed: u64) -> Result<f64> {
    nonempty(data)?;
    check_samples(n_samples, 4, "robust MSE")?;
    let per: Vec<SampleScores> = data
        .par_iter()
        .enumerate()
        .map(|(i, s)| sample_scores(s, model, n_samples, seed, i))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut count = 0;
    for (p, s) in per.iter().zip(data) {
        for (m, y) in p.robust_mean.iter().zip(s.answers()?) {
            total += (m - y).powi(2);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_samples: usize,
    /// The dataset is split round-robin into this many folds; each metric is
    /// reported as mean and standard deviation over folds.
    pub folds: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_samples: DEFAULT_SAMPLES,
            folds: 1,
            seed: 0,
        }
    }
}

/// One row of the per-query dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub id: String,
    pub query: usize,
    pub t: f64,
    pub channel: usize,
    pub answer: f64,
    pub marginal_nll: f64,
    pub crps: f64,
    pub robust_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub njnll: Summary,
    pub mnll: Summary,
    pub crps: Summary,
    pub mse: Summary,
    pub instances: usize,
    pub queries: usize,
    #[serde(skip)]
    pub rows: Vec<QueryRow>,
}

struct InstanceScores {
    joint_nll: f64,
    marginal: Vec<f64>,
    samples: SampleScores,
}

/// All four metrics in one pass over the data.
pub fn evaluate_model<M: ForecastModel>(data: &[SeriesInstance], model: &M, cfg: &EvalConfig) -> Result<MetricReport> {
    nonempty(data)?;
    check_samples(cfg.n_samples, 4, "evaluation")?;
    if cfg.folds == 0 || cfg.folds > data.len() {
        return Err(ProfitiError::Config(format!(
            "folds must be between 1 and the number of instances ({}), got {}",
            data.len(),
            cfg.folds
        )));
    }
    let per: Vec<InstanceScores> = data
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(InstanceScores {
                joint_nll: -model.joint_log_density(s)? / s.num_queries() as f64,
                marginal: model.marginal_log_densities(s)?.iter().map(|v| -v).collect(),
                samples: sample_scores(s, model, cfg.n_samples, cfg.seed, i)?,
            })
        })
        .collect::<Result<_>>()?;

    let mut folds = vec![[0.0f64; 5]; cfg.folds];
    let mut n_inst = vec![0usize; cfg.folds];
    let mut rows = Vec::new();
    for (i, (p, s)) in per.iter().zip(data).enumerate() {
        let f = &mut folds[i % cfg.folds];
        n_inst[i % cfg.folds] += 1;
        f[0] += p.joint_nll;
        let y = s.answers()?;
        for k in 0..y.len() {
            f[1] += p.marginal[k];
            f[2] += p.samples.crps[k];
            f[3] += (p.samples.robust_mean[k] - y[k]).powi(2);
            f[4] += 1.0;
            rows.push(QueryRow {
                id: s.id.clone(),
                query: k,
                t: s.queries[k].t,
                channel: s.queries[k].channel,
                answer: y[k],
                marginal_nll: p.marginal[k],
                crps: p.samples.crps[k],
                robust_mean: p.samples.robust_mean[k],
            });
        }
    }
    let pick = |j: usize| -> Vec<f64> {
        folds
            .iter()
            .zip(&n_inst)
            .map(|(f, &n)| if j == 0 { f[0] / n as f64 } else { f[j] / f[4] })
            .collect()
    };
    Ok(MetricReport {
        njnll: Summary::of(&pick(0)),
        mnll: Summary::of(&pick(1)),
        crps: Summary::of(&pick(2)),
        mse: Summary::of(&pick(3)),
        instances: data.len(),
        queries: rows.len(),
        rows,
    })
}

impl MetricReport {
    /// Plain-text table, one metric per row.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>12} {:>10}", "metric", "mean", "std");
        for (name, m) in [("njNLL", self.njnll), ("mNLL", self.mnll), ("CRPS", self.crps), ("MSE", self.mse)] {
            let _ = writeln!(s, "{name:<8} {:>12.6} {:>10.6}", m.mean, m.std);
        }
        let _ = writeln!(s, "{} instances, {} queries", self.instances, self.queries);
        s
    }

    pub fn rows_csv(&self) -> String {
        let mut s = String::from("id,query,t,channel,answer,marginal_nll,crps,robust_mean\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.id, r.query, r.t, r.channel, r.answer, r.marginal_nll, r.crps, r.robust_mean
            );
        }
        s
    }
}
