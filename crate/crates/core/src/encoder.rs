//! Cross-attention encoder producing one condition row per query.
//!
//! Observations become tokens `FF(time_enc(t), channel_emb(c), value_proj(o))`.
//! Query tokens `(time_enc(t), channel_emb(c))` then attend over the
//! observation tokens for a number of rounds. Each query row depends only on
//! its own token and the observation set, so the output is equivariant in the
//! queries and invariant to observation order.

use profiti_autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ChannelStats, SeriesInstance};
use crate::error::{ProfitiError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Width of the condition rows.
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    /// Number of sinusoid frequencies; `time_enc` has `2 * n_freqs + 1` entries.
    pub n_freqs: usize,
    /// Highest angular frequency; the others are spaced geometrically down to 1.
    pub max_freq: f64,
    pub d_channel: usize,
    pub d_value: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d: 64,
            layers: 2,
            heads: 2,
            n_freqs: 8,
            max_freq: 100.0,
            d_channel: 8,
            d_value: 8,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            return Err(ProfitiError::Config(format!(
                "encoder width {} must be a positive multiple of heads {}",
                self.d, self.heads
            )));
        }
        if self.n_freqs == 0 || self.d_channel == 0 || self.d_value == 0 {
            return Err(ProfitiError::Config("encoder feature sizes must be positive".into()));
        }
        if !(self.max_freq.is_finite() && self.max_freq >= 1.0) {
            return Err(ProfitiError::Config(format!("max_freq must be >= 1, got {}", self.max_freq)));
        }
        Ok(())
    }

    pub fn time_dim(&self) -> usize {
        2 * self.n_freqs + 1
    }

    fn freqs(&self) -> Vec<f64> {
        let n = self.n_freqs;
        (0..n)
            .map(|j| {
                if n == 1 {
                    1.0
                } else {
                    self.max_freq.powf(j as f64 / (n - 1) as f64)
                }
            })
            .collect()
    }
}

/// `[sin(w_j t)..., cos(w_j t)..., t]`.
pub fn time_enc(t: f64, cfg: &EncoderConfig) -> Vec<f64> {
    let freqs = cfg.freqs();
    let mut out: Vec<f64> = freqs.iter().map(|w| (w * t).sin()).collect();
    out.extend(freqs.iter().map(|w| (w * t).cos()));
    out.push(t);
    out
}

struct HeadIds {
    q: ParamId,
    k: ParamId,
    v: ParamId,
}

struct LayerIds {
    heads: Vec<HeadIds>,
    out: ParamId,
    ff_w: ParamId,
    ff_b: ParamId,
}

/// Parameter handles of the encoder inside a [`ParamStore`].
pub struct EncoderParams {
    cfg: EncoderConfig,
    channels: usize,
    chan_emb: ParamId,
    val_w: ParamId,
    val_b: ParamId,
    obs_w: ParamId,
    obs_b: ParamId,
    qry_w: ParamId,
    qry_b: ParamId,
    layers: Vec<LayerIds>,
}

pub(crate) fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..=scale)).collect();
    Tensor::matrix(rows, cols, data).expect("shape matches data")
}

/// Uniform init with variance `gain^2 / fan_in`.
pub(crate) fn glorot(rng: &mut impl Rng, rows: usize, cols: usize, gain: f64) -> Tensor {
    uniform(rng, rows, cols, gain * (3.0 / rows as f64).sqrt())
}

impl EncoderParams {
    /// Register fresh encoder parameters under the `enc.` prefix.
    pub fn init(store: &mut ParamStore, cfg: &EncoderConfig, channels: usize, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d;
        let dh = d / cfg.heads;
        let obs_in = cfg.time_dim() + cfg.d_channel + cfg.d_value;
        let qry_in = cfg.time_dim() + cfg.d_channel;
        let chan_emb = store.insert("enc.channel_emb", uniform(rng, channels, cfg.d_channel, 1.0));
        let val_w = store.insert("enc.value.w", glorot(rng, 1, cfg.d_value, 1.0));
        let val_b = store.insert("enc.value.b", Tensor::zeros(&[1, cfg.d_value]));
        let obs_w = store.insert("enc.obs.w", glorot(rng, obs_in, d, 1.0));
        let obs_b = store.insert("enc.obs.b", Tensor::zeros(&[1, d]));
        let qry_w = store.insert("enc.qry.w", glorot(rng, qry_in, d, 1.0));
        let qry_b = store.insert("enc.qry.b", Tensor::zeros(&[1, d]));
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let heads = (0..cfg.heads)
                .map(|h| HeadIds {
                    q: store.insert(format!("enc.l{l}.h{h}.q"), glorot(rng, d, dh, 1.0)),
                    k: store.insert(format!("enc.l{l}.h{h}.k"), glorot(rng, d, dh, 1.0)),
                    v: store.insert(format!("enc.l{l}.h{h}.v"), glorot(rng, d, dh, 1.0)),
                })
                .collect();
            layers.push(LayerIds {
                heads,
                out: store.insert(format!("enc.l{l}.out"), glorot(rng, d, d, 0.5)),
                ff_w: store.insert(format!("enc.l{l}.ff.w"), glorot(rng, d, d, 0.5)),
                ff_b: store.insert(format!("enc.l{l}.ff.b"), Tensor::zeros(&[1, d])),
            });
        }
        Ok(EncoderParams {
            cfg: cfg.clone(),
            channels,
            chan_emb,
            val_w,
            val_b,
            obs_w,
            obs_b,
            qry_w,
            qry_b,
            layers,
        })
    }

    /// Look the parameters up by name in an existing store.
    pub fn from_store(store: &ParamStore, cfg: &EncoderConfig, channels: usize) -> Result<Self> {
        cfg.validate()?;
        let id = |n: String| store.id(&n).map_err(ProfitiError::from);
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let heads = (0..cfg.heads)
                .map(|h| {
                    Ok(HeadIds {
                        q: id(format!("enc.l{l}.h{h}.q"))?,
                        k: id(format!("enc.l{l}.h{h}.k"))?,
                        v: id(format!("enc.l{l}.h{h}.v"))?,
                    })
                })
                .collect::<Result<_>>()?;
            layers.push(LayerIds {
                heads,
                out: id(format!("enc.l{l}.out"))?,
                ff_w: id(format!("enc.l{l}.ff.w"))?,
                ff_b: id(format!("enc.l{l}.ff.b"))?,
            });
        }
        Ok(EncoderParams {
            cfg: cfg.clone(),
            channels,
            chan_emb: id("enc.channel_emb".into())?,
            val_w: id("enc.value.w".into())?,
            val_b: id("enc.value.b".into())?,
            obs_w: id("enc.obs.w".into())?,
            obs_b: id("enc.obs.b".into())?,
            qry_w: id("enc.qry.w".into())?,
            qry_b: id("enc.qry.b".into())?,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    fn check_channels(&self, id: &str, channels: impl Iterator<Item = usize>) -> Result<Vec<usize>> {
        channels
            .map(|c| {
                if c < self.channels {
                    Ok(c)
                } else {
                    Err(ProfitiError::InvalidSeries {
                        id: id.to_string(),
                        message: format!("channel {c} out of range for {} channels", self.channels),
                    })
                }
            })
            .collect()
    }

    fn time_matrix(&self, ts: impl Iterator<Item = f64>) -> Tensor {
        let rows: Vec<Vec<f64>> = ts.map(|t| time_enc(t, &self.cfg)).collect();
        Tensor::from_rows(&rows).expect("rows have equal length")
    }

    /// Observation tokens, `I x d`.
    pub fn encode_observations(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        inst: &SeriesInstance,
        stats: &ChannelStats,
    ) -> Result<Var> {
        if inst.observations.is_empty() {
            return Err(ProfitiError::InvalidSeries {
                id: inst.id.clone(),
                message: "at least one observation is required".into(),
            });
        }
        let chans = self.check_channels(&inst.id, inst.observations.iter().map(|o| o.channel))?;
        let n = inst.observations.len();
        let te = g.constant(self.time_matrix(inst.observations.iter().map(|o| o.t)));
        let table = g.param(store, self.chan_emb);
        let ce = g.gather_rows(table, &chans)?;
        let vals = Tensor::matrix(n, 1, inst.observations.iter().map(|o| stats.standardize(o)).collect())?;
        let vals = g.constant(vals);
        let vw = g.param(store, self.val_w);
        let vb = g.param(store, self.val_b);
        let vp = g.matmul(vals, vw)?;
        let vp = g.add(vp, vb)?;
        let x = g.concat_cols(&[te, ce, vp])?;
        let w = g.param(store, self.obs_w);
        let b = g.param(store, self.obs_b);
        let h = g.matmul(x, w)?;
        let h = g.add(h, b)?;
        Ok(g.tanh(h)?)
    }

    /// Condition matrix `X`, `K x d`, on the graph.
    pub fn encode_queries(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        inst: &SeriesInstance,
        stats: &ChannelStats,
    ) -> Result<Var> {
        if inst.queries.is_empty() {
            return Err(ProfitiError::InvalidSeries {
                id: inst.id.clone(),
                message: "at least one query is required".into(),
            });
        }
        let obs = self.encode_observations(g, store, inst, stats)?;
        let chans = self.check_channels(&inst.id, inst.queries.iter().map(|q| q.channel))?;
        let te = g.constant(self.time_matrix(inst.queries.iter().map(|q| q.t)));
        let table = g.param(store, self.chan_emb);
        let ce = g.gather_rows(table, &chans)?;
        let x = g.concat_cols(&[te, ce])?;
        let w = g.param(store, self.qry_w);
        let b = g.param(store, self.qry_b);
        let h = g.matmul(x, w)?;
        let h = g.add(h, b)?;
        let mut q = g.tanh(h)?;
        let dh = self.cfg.d / self.cfg.heads;
        let inv_sqrt = 1.0 / (dh as f64).sqrt();
        for layer in &self.layers {
            let mut outs = Vec::with_capacity(layer.heads.len());
            for head in &layer.heads {
                let wq = g.param(store, head.q);
                let wk = g.param(store, head.k);
                let wv = g.param(store, head.v);
                let qh = g.matmul(q, wq)?;
                let kh = g.matmul(obs, wk)?;
                let vh = g.matmul(obs, wv)?;
                let kt = g.transpose(kh)?;
                let s = g.matmul(qh, kt)?;
                let s = g.scale(s, inv_sqrt)?;
                let p = g.softmax_rows(s)?;
                outs.push(g.matmul(p, vh)?);
            }
            let cat = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs)? };
            let wo = g.param(store, layer.out);
            let att = g.matmul(cat, wo)?;
            q = g.add(q, att)?;
            let fw = g.param(store, layer.ff_w);
            let fb = g.param(store, layer.ff_b);
            let f = g.matmul(q, fw)?;
            let f = g.add(f, fb)?;
            let f = g.tanh(f)?;
            q = g.add(q, f)?;
        }
        Ok(q)
    }

    /// Condition matrix as a plain tensor.
    pub fn condition_matrix(&self, store: &ParamStore, inst: &SeriesInstance, stats: &ChannelStats) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = self.encode_queries(&mut g, store, inst, stats)?;
        Ok(g.value(x).clone())
    }
}
