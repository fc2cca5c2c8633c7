//! Irregularly sampled multivariate time series: observations, queries,
//! answers, query sorting and JSONL persistence.
//!
//! Channels are 0-based everywhere, including on disk.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ProfitiError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub channel: usize,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub t: f64,
    pub channel: usize,
}

/// One forecasting problem: past observations, the queried future
/// `(time, channel)` pairs and, when known, their answers.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesInstance {
    pub id: String,
    pub channels: usize,
    pub observations: Vec<Observation>,
    pub queries: Vec<Query>,
    pub answers: Option<Vec<f64>>,
}

impl SeriesInstance {
    pub fn num_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn answers(&self) -> Result<&[f64]> {
        self.answers
            .as_deref()
            .ok_or_else(|| ProfitiError::MissingAnswers(self.id.clone()))
    }

    fn invalid(&self, message: impl Into<String>) -> ProfitiError {
        ProfitiError::InvalidSeries {
            id: self.id.clone(),
            message: message.into(),
        }
    }

    /// Check the structural invariants: at least one query, channels in
    /// range, unique triples and query pairs, answers aligned with
    /// queries, and every query strictly after the last observation.
    pub fn validate(&self) -> Result<()> {
        if self.queries.is_empty() {
            return Err(self.invalid("at least one query is required"));
        }
        let mut seen = HashSet::with_capacity(self.observations.len());
        for o in &self.observations {
            if !(o.t.is_finite() && o.value.is_finite()) {
                return Err(self.invalid("non-finite observation"));
            }
            if o.channel >= self.channels {
                return Err(self.invalid(format!(
                    "observation channel {} out of range (C = {})",
                    o.channel, self.channels
                )));
            }
            if !seen.insert((o.t.to_bits(), o.channel, o.value.to_bits())) {
                return Err(self.invalid(format!(
                    "duplicate observation triple ({}, {}, {})",
                    o.t, o.channel, o.value
                )));
            }
        }
        let mut seen = HashSet::with_capacity(self.queries.len());
        for q in &self.queries {
            if !q.t.is_finite() {
                return Err(self.invalid("non-finite query time"));
            }
            if q.channel >= self.channels {
                return Err(self.invalid(format!(
                    "query channel {} out of range (C = {})",
                    q.channel, self.channels
                )));
            }
            if !seen.insert((q.t.to_bits(), q.channel)) {
                return Err(self.invalid(format!("duplicate query ({}, {})", q.t, q.channel)));
            }
        }
        if let Some(ans) = &self.answers {
            if ans.len() != self.queries.len() {
                return Err(self.invalid(format!(
                    "{} answers for {} queries",
                    ans.len(),
                    self.queries.len()
                )));
            }
            if ans.iter().any(|a| !a.is_finite()) {
                return Err(self.invalid("non-finite answer"));
            }
        }
        let last_obs = self
            .observations
            .iter()
            .map(|o| o.t)
            .fold(f64::NEG_INFINITY, f64::max);
        let first_qry = self.queries.iter().map(|q| q.t).fold(f64::INFINITY, f64::min);
        if first_qry <= last_obs {
            return Err(self.invalid(format!(
                "query time {first_qry} is not after the last observation at {last_obs}"
            )));
        }
        Ok(())
    }

    /// Reorder queries (and answers) by `perm`.
    pub fn permuted(&self, perm: &Permutation) -> Result<SeriesInstance> {
        Ok(SeriesInstance {
            queries: perm.apply(&self.queries)?,
            answers: self.answers.as_ref().map(|a| perm.apply(a)).transpose()?,
            ..self.clone()
        })
    }
}

/// A reordering of `0..n`. Applying it gathers: `out[i] = v[perm[i]]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let n = indices.len();
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n || seen[i] {
                return Err(ProfitiError::Config(format!(
                    "{indices:?} is not a permutation"
                )));
            }
            seen[i] = true;
        }
        Ok(Permutation(indices))
    }

    /// From the 1-based notation used in written examples.
    pub fn from_one_based(indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| i.wrapping_sub(1)).collect())
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (i, &p) in self.0.iter().enumerate() {
            inv[p] = i;
        }
        Permutation(inv)
    }

    pub fn apply<T: Clone>(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.0.len() {
            return Err(ProfitiError::Length {
                expected: self.0.len(),
                got: v.len(),
            });
        }
        Ok(self.0.iter().map(|&i| v[i].clone()).collect())
    }
}

/// Linear map applied to each `(t, c)` row before a lexicographic sort.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SortCriterion {
    pub matrix: [[f64; 2]; 2],
}

impl Default for SortCriterion {
    /// Time first, then channel.
    fn default() -> Self {
        SortCriterion {
            matrix: [[1.0, 0.0], [0.0, 1.0]],
        }
    }
}

impl SortCriterion {
    pub fn new(matrix: [[f64; 2]; 2]) -> Self {
        SortCriterion { matrix }
    }

    /// Row vector `(t, c)` times the matrix.
    pub fn key(&self, q: &Query) -> [f64; 2] {
        let (t, c) = (q.t, q.channel as f64);
        let s = &self.matrix;
        [t * s[0][0] + c * s[1][0], t * s[0][1] + c * s[1][1]]
    }
}

fn lex(a: &[f64; 2], b: &[f64; 2]) -> Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]))
}

/// Indices that sort the transformed queries lexicographically. Ties keep
/// their original order.
pub fn argsort_queries(queries: &[Query], criterion: &SortCriterion) -> Permutation {
    let keys: Vec<[f64; 2]> = queries.iter().map(|q| criterion.key(q)).collect();
    let mut idx: Vec<usize> = (0..queries.len()).collect();
    idx.sort_by(|&a, &b| lex(&keys[a], &keys[b]));
    if idx.windows(2).any(|w| lex(&keys[w[0]], &keys[w[1]]) == Ordering::Equal) {
        log::warn!("sort criterion maps distinct queries to equal keys; keeping input order for ties");
    }
    Permutation(idx)
}

/// Per-channel mean and standard deviation of observed values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn identity(channels: usize) -> Self {
        ChannelStats {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn from_instances(instances: &[SeriesInstance], channels: usize) -> Self {
        let mut sum = vec![0.0; channels];
        let mut sq = vec![0.0; channels];
        let mut n = vec![0usize; channels];
        for o in instances.iter().flat_map(|s| &s.observations) {
            sum[o.channel] += o.value;
            sq[o.channel] += o.value * o.value;
            n[o.channel] += 1;
        }
        let mut stats = Self::identity(channels);
        for c in 0..channels {
            if n[c] > 1 {
                let m = sum[c] / n[c] as f64;
                let var = (sq[c] / n[c] as f64 - m * m).max(0.0);
                stats.mean[c] = m;
                stats.std[c] = if var > 1e-12 { var.sqrt() } else { 1.0 };
            }
        }
        stats
    }

    pub fn standardize(&self, o: &Observation) -> f64 {
        (o.value - self.mean[o.channel]) / self.std[o.channel]
    }
}

#[derive(Serialize, Deserialize)]
struct JsonSeries {
    id: String,
    #[serde(rename = "C")]
    channels: usize,
    obs: Vec<[f64; 3]>,
    qry: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ans: Option<Vec<f64>>,
}

fn channel_index(c: f64) -> Option<usize> {
    (c >= 0.0 && c.fract() == 0.0 && c < u32::MAX as f64).then_some(c as usize)
}

/// Parse one JSONL line. `line` is 1-based and only used for messages.
pub fn parse_series(text: &str, line: usize) -> Result<SeriesInstance> {
    let raw: JsonSeries = serde_json::from_str(text).map_err(|e| ProfitiError::Schema {
        line,
        message: e.to_string(),
    })?;
    let schema = |message: String| ProfitiError::Schema { line, message };
    let observations = raw
        .obs
        .iter()
        .map(|&[t, c, o]| {
            channel_index(c)
                .map(|channel| Observation { t, channel, value: o })
                .ok_or_else(|| schema(format!("invalid channel index {c}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let queries = raw
        .qry
        .iter()
        .map(|&[t, c]| {
            channel_index(c)
                .map(|channel| Query { t, channel })
                .ok_or_else(|| schema(format!("invalid channel index {c}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let series = SeriesInstance {
        id: raw.id,
        channels: raw.channels,
        observations,
        queries,
        answers: raw.ans,
    };
    series.validate()?;
    Ok(series)
}

pub fn series_to_json(s: &SeriesInstance) -> Result<String> {
    let raw = JsonSeries {
        id: s.id.clone(),
        channels: s.channels,
        obs: s
            .observations
            .iter()
            .map(|o| [o.t, o.channel as f64, o.value])
            .collect(),
        qry: s.queries.iter().map(|q| [q.t, q.channel as f64]).collect(),
        ans: s.answers.clone(),
    };
    Ok(serde_json::to_string(&raw)?)
}

/// Read one series per non-blank line.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<SeriesInstance>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ProfitiError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ProfitiError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_series(&line, i + 1)?);
    }
    Ok(out)
}

pub fn save_jsonl(instances: &[SeriesInstance], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| ProfitiError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in instances {
        writeln!(w, "{}", series_to_json(s)?).map_err(|e| ProfitiError::io(path, e))?;
    }
    w.flush().map_err(|e| ProfitiError::io(path, e))
}
