//! The conditional flow: encoder, a fixed answer standardization, an initial
//! shift layer, and `L` blocks of attention, EL and Shiesh.
//!
//! Density evaluation maps answers `y` to the latent `z`; per block the maps
//! are applied in the order attention, EL, Shiesh. Sampling draws `z` and
//! runs the inverses in reverse. All work happens in sorted query order and
//! results are returned in the caller's order.

use profiti_autodiff::linalg::{forward_substitution, Lu};
use profiti_autodiff::{AdError, Gradients, Graph, ParamGrads, ParamId, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{argsort_queries, ChannelStats, Permutation, SeriesInstance, SortCriterion};
use crate::encoder::{glorot, EncoderConfig, EncoderParams};
use crate::error::{ProfitiError, Result};
use crate::flow::attention::{attn_matrix_node, AttnKind, DEFAULT_EPSILON};
use crate::flow::el::{el_scale_shift_node, MlpVars};
use crate::flow::shiesh::{shiesh_fwd, shiesh_inv, shiesh_log_dfwd, shiesh_log_dfwd_node, shiesh_node, SHIESH_B};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariantFlags {
    pub use_sita: bool,
    pub attn_kind: AttnKind,
    pub use_shiesh: bool,
}

impl Default for VariantFlags {
    fn default() -> Self {
        VariantFlags {
            use_sita: true,
            attn_kind: AttnKind::Tri,
            use_shiesh: true,
        }
    }
}

impl VariantFlags {
    pub fn validate(&self) -> Result<()> {
        if !self.use_sita && self.attn_kind != AttnKind::Tri {
            return Err(ProfitiError::Config(format!(
                "attn_kind {:?} requires use_sita = true",
                self.attn_kind
            )));
        }
        Ok(())
    }

    /// Short label as used in ablation tables.
    pub fn label(&self) -> String {
        let mut s = String::from("full");
        if !self.use_sita {
            s.push_str("-SITA");
        }
        if !self.use_shiesh {
            s.push_str("-Shiesh");
        }
        match self.attn_kind {
            AttnKind::Tri => {}
            AttnKind::Reg => s = s.replacen("full", "full-SITA+Areg", 1),
            AttnKind::Itrans => s = s.replacen("full", "full-SITA+AiTrans", 1),
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Number of blocks `L`.
    pub blocks: usize,
    pub epsilon: f64,
    pub shiesh_b: f64,
    pub sort: SortCriterion,
    pub flags: VariantFlags,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            blocks: 4,
            epsilon: DEFAULT_EPSILON,
            shiesh_b: SHIESH_B,
            sort: SortCriterion::default(),
            flags: VariantFlags::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.flags.validate()?;
        if self.blocks == 0 {
            return Err(ProfitiError::Config("at least one block is required".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ProfitiError::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.shiesh_b > 0.0 && self.shiesh_b.is_finite()) {
            return Err(ProfitiError::Config(format!("shiesh_b must be positive, got {}", self.shiesh_b)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct MlpIds {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl MlpIds {
    fn init(store: &mut ParamStore, prefix: &str, d: usize, rng: &mut impl Rng) -> Self {
        MlpIds {
            w1: store.insert(format!("{prefix}.w1"), glorot(rng, d, d, 1.0)),
            b1: store.insert(format!("{prefix}.b1"), Tensor::zeros(&[1, d])),
            w2: store.insert(format!("{prefix}.w2"), glorot(rng, d, 1, 0.1)),
            b2: store.insert(format!("{prefix}.b2"), Tensor::zeros(&[1, 1])),
        }
    }

    fn lookup(store: &ParamStore, prefix: &str) -> Result<Self> {
        let id = |s: &str| store.id(&format!("{prefix}.{s}")).map_err(ProfitiError::from);
        Ok(MlpIds {
            w1: id("w1")?,
            b1: id("b1")?,
            w2: id("w2")?,
            b2: id("b2")?,
        })
    }

    fn vars(&self, g: &mut Graph, store: &ParamStore) -> MlpVars {
        MlpVars {
            w1: g.param(store, self.w1),
            b1: g.param(store, self.b1),
            w2: g.param(store, self.w2),
            b2: g.param(store, self.b2),
        }
    }
}

struct BlockIds {
    attn: Option<(ParamId, ParamId)>,
    sca: MlpIds,
    trs: MlpIds,
}

struct FlowIds {
    init_trs: MlpIds,
    blocks: Vec<BlockIds>,
}

impl FlowIds {
    fn init(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.encoder.d;
        let init_trs = MlpIds::init(store, "flow.init.trs", d, rng);
        let attn_gain = (0.25 / d as f64).powf(0.25);
        let blocks = (0..cfg.blocks)
            .map(|l| BlockIds {
                attn: cfg.flags.use_sita.then(|| {
                    (
                        store.insert(format!("flow.b{l}.attn.q"), glorot(rng, d, d, attn_gain)),
                        store.insert(format!("flow.b{l}.attn.k"), glorot(rng, d, d, attn_gain)),
                    )
                }),
                sca: MlpIds::init(store, &format!("flow.b{l}.sca"), d, rng),
                trs: MlpIds::init(store, &format!("flow.b{l}.trs"), d, rng),
            })
            .collect();
        FlowIds { init_trs, blocks }
    }

    fn lookup(store: &ParamStore, cfg: &ModelConfig) -> Result<Self> {
        let blocks = (0..cfg.blocks)
            .map(|l| {
                let attn = if cfg.flags.use_sita {
                    Some((store.id(&format!("flow.b{l}.attn.q"))?, store.id(&format!("flow.b{l}.attn.k"))?))
                } else {
                    None
                };
                Ok(BlockIds {
                    attn,
                    sca: MlpIds::lookup(store, &format!("flow.b{l}.sca"))?,
                    trs: MlpIds::lookup(store, &format!("flow.b{l}.trs"))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(FlowIds {
            init_trs: MlpIds::lookup(store, "flow.init.trs")?,
            blocks,
        })
    }
}

/// Output of density evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityResult {
    pub log_density: f64,
    /// Latent vector in the caller's query order.
    pub z: Vec<f64>,
    /// `log |det|` of the standardization and initial layer, then one entry
    /// per block. `log_density = log N(z; 0, I) + sum(per_layer_logdets)`.
    pub per_layer_logdets: Vec<f64>,
}

/// Graph nodes that depend only on the condition, in sorted order.
struct CondNodes {
    perm: Permutation,
    init_shift: Var,
    blocks: Vec<BlockNodes>,
}

struct BlockNodes {
    /// Attention matrix and its `log |det|`.
    attn: Option<(Var, Var)>,
    log_scale: Var,
    shift: Var,
}

fn at_block(block: usize, stage: &'static str) -> impl Fn(AdError) -> ProfitiError {
    move |e| match e {
        AdError::NonFinite { .. } => ProfitiError::NonFinite { block, stage },
        other => ProfitiError::Autodiff(other),
    }
}

fn retag(block: usize, stage: &'static str) -> impl Fn(ProfitiError) -> ProfitiError {
    move |e| match e {
        ProfitiError::Autodiff(a) => at_block(block, stage)(a),
        other => other,
    }
}

/// Density-path maps for one instance, with all condition-dependent
/// quantities already evaluated.
#[derive(Clone, Debug)]
pub struct ConditionedFlow {
    perm: Permutation,
    /// Answer mean and scale per sorted query.
    y_mean: Vec<f64>,
    y_std: Vec<f64>,
    init_shift: Vec<f64>,
    blocks: Vec<PlainBlock>,
    use_shiesh: bool,
    b: f64,
}

#[derive(Clone, Debug)]
struct PlainBlock {
    attn: Option<PlainAttn>,
    log_scale: Vec<f64>,
    shift: Vec<f64>,
}

#[derive(Clone, Debug)]
struct PlainAttn {
    matrix: Tensor,
    logdet: f64,
    lower: bool,
}

impl PlainAttn {
    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let k = u.len();
        (0..k)
            .map(|i| {
                let row = self.matrix.row(i);
                let end = if self.lower { i + 1 } else { k };
                (0..end).map(|j| row[j] * u[j]).sum()
            })
            .collect()
    }

    fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.lower {
            Ok(forward_substitution(&self.matrix, v)?)
        } else {
            Ok(Lu::new(&self.matrix)?.solve(v))
        }
    }
}

fn ensure_finite(v: &[f64], block: usize, stage: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ProfitiError::NonFinite { block, stage })
    }
}

impl ConditionedFlow {
    pub fn num_queries(&self) -> usize {
        self.perm.len()
    }

    fn run(&self, y: &[f64], marginal: bool) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let k = self.num_queries();
        if y.len() != k {
            return Err(ProfitiError::Length { expected: k, got: y.len() });
        }
        let ys = self.perm.apply(y)?;
        // per-query log-det contributions, one row per layer group
        let mut terms = Vec::with_capacity(self.blocks.len() + 1);
        let mut u: Vec<f64> = (0..k)
            .map(|i| (ys[i] - self.y_mean[i]) / self.y_std[i] + self.init_shift[i])
            .collect();
        ensure_finite(&u, 0, "initial")?;
        terms.push(self.y_std.iter().map(|s| -s.ln()).collect());
        for (l, blk) in self.blocks.iter().enumerate() {
            let mut t = vec![0.0; k];
            if let Some(a) = &blk.attn {
                if marginal {
                    for i in 0..k {
                        let m = a.matrix.at(i, i);
                        u[i] *= m;
                        t[i] += m.ln();
                    }
                } else {
                    u = a.apply(&u);
                    t[0] += a.logdet;
                }
                ensure_finite(&u, l, "attention")?;
            }
            for i in 0..k {
                u[i] = u[i] * blk.log_scale[i].exp() + blk.shift[i];
                t[i] += blk.log_scale[i];
            }
            ensure_finite(&u, l, "el")?;
            if self.use_shiesh {
                for i in 0..k {
                    t[i] += shiesh_log_dfwd(u[i], self.b).0;
                    u[i] = shiesh_fwd(u[i], self.b);
                }
                ensure_finite(&u, l, "shiesh")?;
            }
            terms.push(t);
        }
        Ok((u, terms))
    }

    /// Joint log-density of answers `y` given in the caller's query order.
    pub fn log_density(&self, y: &[f64]) -> Result<DensityResult> {
        let (zs, terms) = self.run(y, false)?;
        let per_layer_logdets: Vec<f64> = terms.iter().map(|t| t.iter().sum()).collect();
        let base: f64 = zs.iter().map(|z| -0.5 * (z * z + LN_2PI)).sum();
        let log_density = base + per_layer_logdets.iter().sum::<f64>();
        if !log_density.is_finite() {
            return Err(ProfitiError::NonFinite {
                block: self.blocks.len() - 1,
                stage: "base density",
            });
        }
        Ok(DensityResult {
            log_density,
            z: self.perm.inverse().apply(&zs)?,
            per_layer_logdets,
        })
    }

    /// Per-query log-densities with the off-diagonal attention entries
    /// zeroed, in the caller's query order.
    pub fn marginal_log_densities(&self, y: &[f64]) -> Result<Vec<f64>> {
        let (zs, terms) = self.run(y, true)?;
        let sorted: Vec<f64> = (0..zs.len())
            .map(|i| -0.5 * (zs[i] * zs[i] + LN_2PI) + terms.iter().map(|t| t[i]).sum::<f64>())
            .collect();
        self.perm.inverse().apply(&sorted)
    }

    /// Map a latent vector (caller's order) to answers.
    pub fn sample_from_latent(&self, z: &[f64]) -> Result<Vec<f64>> {
        let k = self.num_queries();
        if z.len() != k {
            return Err(ProfitiError::Length { expected: k, got: z.len() });
        }
        let mut u = self.perm.apply(z)?;
        for (l, blk) in self.blocks.iter().enumerate().rev() {
            if self.use_shiesh {
                for v in u.iter_mut() {
                    *v = shiesh_inv(*v, self.b);
                }
            }
            for i in 0..k {
                u[i] = (u[i] - blk.shift[i]) * (-blk.log_scale[i]).exp();
            }
            if let Some(a) = &blk.attn {
                u = a.solve(&u)?;
            }
            ensure_finite(&u, l, "inverse")?;
        }
        let ys: Vec<f64> = (0..k)
            .map(|i| (u[i] - self.init_shift[i]) * self.y_std[i] + self.y_mean[i])
            .collect();
        self.perm.inverse().apply(&ys)
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
        let k = self.num_queries();
        (0..n)
            .map(|_| {
                let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
                self.sample_from_latent(&z)
            })
            .collect()
    }
}

/// Anything that can score and sample answers for an instance.
pub trait ForecastModel: Sync {
    fn joint_log_density(&self, inst: &SeriesInstance) -> Result<f64>;
    fn marginal_log_densities(&self, inst: &SeriesInstance) -> Result<Vec<f64>>;
    /// `n` joint samples, each in the instance's query order.
    fn sample(&self, inst: &SeriesInstance, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>>;
}

/// The full model: configuration, normalization statistics and parameters.
pub struct Profiti {
    config: ModelConfig,
    channels: usize,
    stats: ChannelStats,
    store: ParamStore,
    encoder: EncoderParams,
    flow: FlowIds,
}

impl Clone for Profiti {
    fn clone(&self) -> Self {
        Profiti::from_parts(self.config.clone(), self.channels, self.stats.clone(), self.store.clone())
            .expect("parameters of a valid model")
    }
}

impl std::fmt::Debug for Profiti {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Profiti")
            .field("config", &self.config)
            .field("channels", &self.channels)
            .field("params", &self.store.numel())
            .finish()
    }
}

impl Profiti {
    /// Freshly initialized model for `channels` channels.
    pub fn new(config: ModelConfig, channels: usize, stats: ChannelStats, seed: u64) -> Result<Self> {
        config.validate()?;
        check_stats(&stats, channels)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = EncoderParams::init(&mut store, &config.encoder, channels, &mut rng)?;
        let flow = FlowIds::init(&mut store, &config, &mut rng);
        Ok(Profiti {
            config,
            channels,
            stats,
            store,
            encoder,
            flow,
        })
    }

    /// Rebuild a model around an existing parameter store.
    pub fn from_parts(config: ModelConfig, channels: usize, stats: ChannelStats, store: ParamStore) -> Result<Self> {
        config.validate()?;
        check_stats(&stats, channels)?;
        let encoder = EncoderParams::from_store(&store, &config.encoder, channels)?;
        let flow = FlowIds::lookup(&store, &config)?;
        let fresh = Profiti::new(config.clone(), channels, stats.clone(), 0)?;
        if fresh.store.len() != store.len() {
            return Err(ProfitiError::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                fresh.store.len(),
                store.len()
            )));
        }
        for (_, name, t) in fresh.store.iter() {
            let have = store.get(store.id(name)?);
            if have.shape() != t.shape() {
                return Err(ProfitiError::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    have.shape(),
                    t.shape()
                )));
            }
        }
        Ok(Profiti {
            config,
            channels,
            stats,
            store,
            encoder,
            flow,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn stats(&self) -> &ChannelStats {
        &self.stats
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn condition_nodes(&self, g: &mut Graph, inst: &SeriesInstance) -> Result<CondNodes> {
        let x = self.encoder.encode_queries(g, &self.store, inst, &self.stats)?;
        let perm = argsort_queries(&inst.queries, &self.config.sort);
        let xs = g.gather_rows(x, perm.indices())?;
        let init = self.flow.init_trs.vars(g, &self.store);
        let (_, init_shift) = el_scale_shift_node(g, xs, None, &init).map_err(retag(0, "initial"))?;
        let mut blocks = Vec::with_capacity(self.flow.blocks.len());
        for (l, ids) in self.flow.blocks.iter().enumerate() {
            let attn = match ids.attn {
                Some((wq, wk)) => {
                    let wq = g.param(&self.store, wq);
                    let wk = g.param(&self.store, wk);
                    let q = g.matmul(xs, wq)?;
                    let k = g.matmul(xs, wk)?;
                    let kt = g.transpose(k)?;
                    let a = g.matmul(q, kt).map_err(at_block(l, "attention"))?;
                    Some(
                        attn_matrix_node(g, a, self.config.flags.attn_kind, self.config.epsilon)
                            .map_err(retag(l, "attention"))?,
                    )
                }
                None => None,
            };
            let sca = ids.sca.vars(g, &self.store);
            let trs = ids.trs.vars(g, &self.store);
            let (ls, shift) = el_scale_shift_node(g, xs, Some(&sca), &trs).map_err(retag(l, "el"))?;
            blocks.push(BlockNodes {
                attn,
                log_scale: ls.expect("scale network present"),
                shift,
            });
        }
        Ok(CondNodes {
            perm,
            init_shift,
            blocks,
        })
    }

    fn answer_scale(&self, inst: &SeriesInstance, perm: &Permutation) -> (Vec<f64>, Vec<f64>) {
        perm.indices()
            .iter()
            .map(|&i| {
                let c = inst.queries[i].channel;
                (self.stats.mean[c], self.stats.std[c])
            })
            .unzip()
    }

    /// Evaluate everything that depends on the condition but not on `y`.
    pub fn condition(&self, inst: &SeriesInstance) -> Result<ConditionedFlow> {
        self.check_channels(inst)?;
        let mut g = Graph::new();
        let nodes = self.condition_nodes(&mut g, inst)?;
        let (y_mean, y_std) = self.answer_scale(inst, &nodes.perm);
        let lower = self.config.flags.attn_kind == AttnKind::Tri;
        let blocks = nodes
            .blocks
            .iter()
            .map(|b| PlainBlock {
                attn: b.attn.map(|(m, ld)| PlainAttn {
                    matrix: g.value(m).clone(),
                    logdet: g.value(ld).item(),
                    lower,
                }),
                log_scale: g.value(b.log_scale).data().to_vec(),
                shift: g.value(b.shift).data().to_vec(),
            })
            .collect();
        Ok(ConditionedFlow {
            init_shift: g.value(nodes.init_shift).data().to_vec(),
            perm: nodes.perm,
            y_mean,
            y_std,
            blocks,
            use_shiesh: self.config.flags.use_shiesh,
            b: self.config.shiesh_b,
        })
    }

    fn check_channels(&self, inst: &SeriesInstance) -> Result<()> {
        if inst.queries.iter().any(|q| q.channel >= self.channels) {
            return Err(ProfitiError::InvalidSeries {
                id: inst.id.clone(),
                message: format!("query channel out of range for {} channels", self.channels),
            });
        }
        Ok(())
    }

    /// Joint density of `y` (caller's query order).
    pub fn log_density(&self, inst: &SeriesInstance, y: &[f64]) -> Result<DensityResult> {
        self.condition(inst)?.log_density(y)
    }

    /// `-(1/K) log p(y)` for the instance's own answers.
    pub fn joint_nll(&self, inst: &SeriesInstance) -> Result<f64> {
        let y = inst.answers()?;
        Ok(-self.log_density(inst, y)?.log_density / y.len() as f64)
    }

    /// Marginal NLL of query `k` of the instance's answers.
    pub fn marginal_nll(&self, inst: &SeriesInstance, k: usize) -> Result<f64> {
        let y = inst.answers()?;
        if k >= y.len() {
            return Err(ProfitiError::Length { expected: y.len(), got: k });
        }
        Ok(-self.condition(inst)?.marginal_log_densities(y)?[k])
    }

    /// Joint log-density of the instance's answers as a graph node.
    pub fn log_density_node(&self, g: &mut Graph, inst: &SeriesInstance) -> Result<Var> {
        self.check_channels(inst)?;
        let y = inst.answers()?;
        let k = y.len();
        let nodes = self.condition_nodes(g, inst)?;
        let (mean, std) = self.answer_scale(inst, &nodes.perm);
        let ys = nodes.perm.apply(y)?;
        let norm: Vec<f64> = (0..k).map(|i| (ys[i] - mean[i]) / std[i]).collect();
        let mut logdet = -std.iter().map(|s| s.ln()).sum::<f64>();
        let u0 = g.constant(Tensor::column(norm));
        let mut u = g.add(u0, nodes.init_shift)?;
        let mut parts = Vec::new();
        let b = self.config.shiesh_b;
        for (l, blk) in nodes.blocks.iter().enumerate() {
            if let Some((m, ld)) = blk.attn {
                u = g.matmul(m, u).map_err(at_block(l, "attention"))?;
                parts.push(ld);
            }
            let s = g.exp(blk.log_scale)?;
            let us = g.mul(u, s)?;
            u = g.add(us, blk.shift).map_err(at_block(l, "el"))?;
            parts.push(g.sum(blk.log_scale)?);
            if self.config.flags.use_shiesh {
                let lg = shiesh_log_dfwd_node(g, u, b).map_err(retag(l, "shiesh"))?;
                parts.push(g.sum(lg)?);
                u = shiesh_node(g, u, b).map_err(retag(l, "shiesh"))?;
            }
        }
        logdet -= 0.5 * LN_2PI * k as f64;
        let sq = g.square(u)?;
        let sq = g.sum(sq)?;
        let mut total = g.scale(sq, -0.5)?;
        for p in parts {
            total = g.add(total, p)?;
        }
        Ok(g.add_scalar(total, logdet)?)
    }

    /// `-(1/K) log p(y)` as a graph node, the training loss of one instance.
    pub fn njnll_node(&self, g: &mut Graph, inst: &SeriesInstance) -> Result<Var> {
        let k = inst.num_queries() as f64;
        let ld = self.log_density_node(g, inst)?;
        Ok(g.scale(ld, -1.0 / k)?)
    }

    /// Loss and parameter gradients of one instance.
    pub fn loss_and_grads(&self, inst: &SeriesInstance) -> Result<(f64, ParamGrads)> {
        let mut g = Graph::new();
        let loss = self.njnll_node(&mut g, inst)?;
        let grads: Gradients = g.backward(loss)?;
        Ok((g.value(loss).item(), grads.param_grads(&g, &self.store)))
    }

    pub fn sample(&self, inst: &SeriesInstance, n: usize, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(ProfitiError::Config("sample count must be at least 1".into()));
        }
        self.condition(inst)?.sample(n, rng)
    }
}

fn check_stats(stats: &ChannelStats, channels: usize) -> Result<()> {
    if channels == 0 {
        return Err(ProfitiError::Config("at least one channel is required".into()));
    }
    if stats.mean.len() != channels || stats.std.len() != channels {
        return Err(ProfitiError::Config(format!(
            "normalization statistics cover {} channels, model has {channels}",
            stats.mean.len()
        )));
    }
    if stats.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || stats.mean.iter().any(|m| !m.is_finite()) {
        return Err(ProfitiError::Config("normalization statistics must be finite with positive scale".into()));
    }
    Ok(())
}

impl ForecastModel for Profiti {
    fn joint_log_density(&self, inst: &SeriesInstance) -> Result<f64> {
        Ok(self.log_density(inst, inst.answers()?)?.log_density)
    }

    fn marginal_log_densities(&self, inst: &SeriesInstance) -> Result<Vec<f64>> {
        self.condition(inst)?.marginal_log_densities(inst.answers()?)
    }

    fn sample(&self, inst: &SeriesInstance, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
        Profiti::sample(self, inst, n, rng)
    }
}
