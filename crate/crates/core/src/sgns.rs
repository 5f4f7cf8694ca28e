//! Skip-gram with negative sampling, optionally with hashed character
//! n-gram subwords, emitting snapshots after exact raw-token budgets.
//!
//! Training is single-threaded and fully determined by the seed. The token
//! counter counts every corpus token read, before frequency subsampling and
//! including words below `min_count`; snapshots are taken at the first
//! sentence boundary at or past each budget.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};

pub const DEFAULT_BUCKETS: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subwords {
    Off,
    On { n_min: usize, n_max: usize, buckets: usize },
}

impl Default for Subwords {
    fn default() -> Self {
        Subwords::On {
            n_min: 3,
            n_max: 6,
            buckets: DEFAULT_BUCKETS,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub negatives: usize,
    pub window: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub subsample_t: f64,
    pub subwords: Subwords,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 300,
            learning_rate: 0.025,
            negatives: 15,
            window: 5,
            epochs: 15,
            min_count: 5,
            subsample_t: 1e-4,
            subwords: Subwords::default(),
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.negatives == 0 || self.window == 0 || self.epochs == 0 || self.min_count == 0 {
            return Err(Error::param("dim, negatives, window, epochs and min_count must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.subsample_t > 0.0) {
            return Err(Error::param("learning rate and subsampling threshold must be positive"));
        }
        if let Subwords::On { n_min, n_max, buckets } = self.subwords {
            if n_min == 0 || n_min > n_max || buckets == 0 {
                return Err(Error::param("subwords need 1 <= n_min <= n_max and buckets > 0"));
            }
        }
        Ok(())
    }
}

/// Strictly increasing raw-token budgets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SnapshotPlan {
    budgets: Vec<u64>,
}

impl SnapshotPlan {
    pub fn new(budgets: Vec<u64>) -> Result<Self> {
        if budgets.first() == Some(&0) || budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param(format!(
                "snapshot budgets must be strictly increasing positive integers: {budgets:?}"
            )));
        }
        Ok(SnapshotPlan { budgets })
    }

    pub fn budgets(&self) -> &[u64] {
        &self.budgets
    }

    pub fn len(&self) -> usize {
        self.budgets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.budgets.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    pub words: Vec<String>,
    pub counts: Vec<u64>,
    index: HashMap<String, u32>,
    /// Every token in the corpus.
    pub total_tokens: u64,
    /// Tokens of words that made the cut.
    pub kept_tokens: u64,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }
}

/// Counts whitespace tokens; keeps words seen at least `min_count` times in
/// descending count order, ties broken lexicographically.
pub fn build_vocab<'a>(lines: impl IntoIterator<Item = &'a str>, min_count: u64) -> Result<Vocab> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut total = 0u64;
    for line in lines {
        for tok in line.split_whitespace() {
            *counts.entry(tok).or_default() += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    let mut entries: Vec<(&str, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let kept = entries.iter().map(|e| e.1).sum();
    let index = entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e.0.to_string(), i as u32))
        .collect();
    Ok(Vocab {
        words: entries.iter().map(|e| e.0.to_string()).collect(),
        counts: entries.iter().map(|e| e.1).collect(),
        index,
        total_tokens: total,
        kept_tokens: kept,
    })
}

/// 32-bit FNV-1a over the UTF-8 bytes.
pub fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 2_166_136_261;
    for &b in bytes {
        h ^= b as u32;
        h = h.wrapping_mul(16_777_619);
    }
    h
}

/// Character n-grams of `<word>` with lengths `n_min..=n_max`, hashed into
/// `buckets`. The caller adds the word's own vocabulary id.
pub fn subword_ngrams(word: &str, n_min: usize, n_max: usize, buckets: usize) -> Vec<u32> {
    let wrapped: Vec<char> = std::iter::once('<').chain(word.chars()).chain(std::iter::once('>')).collect();
    let mut ids = Vec::new();
    let mut buf = String::new();
    for n in n_min..=n_max.min(wrapped.len()) {
        for start in 0..=wrapped.len() - n {
            buf.clear();
            buf.extend(&wrapped[start..start + n]);
            ids.push((fnv1a(buf.as_bytes()) as u64 % buckets as u64) as u32);
        }
    }
    ids
}

/// Input-row ids per vocabulary word: its own row, then `V + bucket` for
/// each n-gram.
fn input_ids(vocab: &Vocab, subwords: Subwords) -> Vec<Vec<u32>> {
    let v = vocab.len() as u32;
    vocab
        .words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let mut ids = vec![i as u32];
            if let Subwords::On { n_min, n_max, buckets } = subwords {
                ids.extend(subword_ngrams(w, n_min, n_max, buckets).into_iter().map(|b| v + b));
            }
            ids
        })
        .collect()
}

/// Dot product with eight independent accumulators, which lets the compiler
/// vectorise the loop.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let (ca, ra) = a.split_at(a.len() / 8 * 8);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(8).zip(cb.chunks_exact(8)) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f32 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f32>() + tail
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// One SGNS step for a hidden vector against `(output row, label)` targets.
/// Output rows are updated in place; the returned vector is the step to add
/// to the hidden vector (already scaled by `lr`). Returns the loss as well.
pub fn sgns_step(hidden: &[f32], targets: &[(usize, bool)], output: &mut [f32], lr: f32) -> (Vec<f32>, f64) {
    let mut grad = vec![0f32; hidden.len()];
    let mut loss = 0f64;
    step(hidden, targets, output, lr, &mut grad, Some(&mut loss));
    (grad, loss)
}

/// Accumulates the hidden-vector step into `grad` (which the caller zeroes).
/// Returns false when a score is not finite.
fn step(
    hidden: &[f32],
    targets: &[(usize, bool)],
    output: &mut [f32],
    lr: f32,
    grad: &mut [f32],
    mut loss: Option<&mut f64>,
) -> bool {
    let dim = hidden.len();
    for &(t, label) in targets {
        let row = &mut output[t * dim..(t + 1) * dim];
        let dot = dot(hidden, row);
        if !dot.is_finite() {
            return false;
        }
        let f = sigmoid(dot);
        if let Some(l) = loss.as_deref_mut() {
            let p = if label { f as f64 } else { 1.0 - f as f64 };
            *l -= p.max(1e-30).ln();
        }
        let g = (if label { 1.0 } else { 0.0 } - f) * lr;
        for ((gr, r), h) in grad.iter_mut().zip(row.iter_mut()).zip(hidden) {
            *gr += g * *r;
            *r += g * h;
        }
    }
    true
}

/// Negative-sampling loss `-log s(h.c) - sum log s(-h.n)` in double precision.
pub fn sgns_loss(hidden: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let log_sig = |x: f64| -(1.0 + (-x).exp()).ln();
    -log_sig(dot(hidden, context)) - negatives.iter().map(|n| log_sig(-dot(hidden, n))).sum::<f64>()
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub budget: u64,
    /// Raw tokens consumed when the snapshot was taken.
    pub consumed: u64,
    pub space: EmbeddingSpace,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub snapshots: Vec<Snapshot>,
    pub final_space: EmbeddingSpace,
    pub vocab: Vocab,
    pub consumed: u64,
    pub max_sentence_len: usize,
}

struct Model {
    dim: usize,
    input: Vec<f32>,
    output: Vec<f32>,
    ids: Vec<Vec<u32>>,
}

impl Model {
    fn hidden(&self, word: usize, buf: &mut [f32]) {
        let ids = &self.ids[word];
        buf.iter_mut().for_each(|v| *v = 0.0);
        for &id in ids {
            let row = &self.input[id as usize * self.dim..(id as usize + 1) * self.dim];
            for (b, r) in buf.iter_mut().zip(row) {
                *b += r;
            }
        }
        if ids.len() > 1 {
            let inv = 1.0 / ids.len() as f32;
            buf.iter_mut().for_each(|v| *v *= inv);
        }
    }

    fn apply_hidden_grad(&mut self, word: usize, grad: &[f32]) {
        let ids = &self.ids[word];
        let scale = 1.0 / ids.len() as f32;
        for &id in ids {
            let row = &mut self.input[id as usize * self.dim..(id as usize + 1) * self.dim];
            for (r, g) in row.iter_mut().zip(grad) {
                *r += g * scale;
            }
        }
    }

    fn to_space(&self, vocab: &Vocab) -> Result<EmbeddingSpace> {
        let mut data = Vec::with_capacity(vocab.len() * self.dim);
        let mut buf = vec![0f32; self.dim];
        for w in 0..vocab.len() {
            self.hidden(w, &mut buf);
            data.extend(buf.iter().map(|&v| v as f64));
        }
        EmbeddingSpace::new(vocab.words.clone(), data, self.dim)?.with_counts(vocab.counts.clone())
    }
}

const OOV: u32 = u32::MAX;

/// Trains on a corpus file with one whitespace-tokenised sentence per line.
pub fn train(corpus: impl AsRef<Path>, cfg: &TrainConfig, plan: &SnapshotPlan) -> Result<TrainOutput> {
    let path = corpus.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    train_text(&text, cfg, plan)
}

pub fn train_text(text: &str, cfg: &TrainConfig, plan: &SnapshotPlan) -> Result<TrainOutput> {
    cfg.validate()?;
    let vocab = build_vocab(text.lines(), cfg.min_count)?;
    if vocab.is_empty() {
        return Err(Error::param(format!("no word occurs at least {} times", cfg.min_count)));
    }

    // corpus as ids, sentence offsets
    let mut tokens: Vec<u32> = Vec::with_capacity(vocab.total_tokens as usize);
    let mut bounds: Vec<usize> = vec![0];
    for line in text.lines() {
        let before = tokens.len();
        tokens.extend(line.split_whitespace().map(|t| vocab.index_of(t).unwrap_or(OOV)));
        if tokens.len() > before {
            bounds.push(tokens.len());
        }
    }
    let max_sentence_len = bounds.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);
    let stream_len = cfg.epochs as u64 * vocab.total_tokens;
    let unreachable: Vec<u64> = plan.budgets().iter().copied().filter(|&m| m > stream_len).collect();
    if !unreachable.is_empty() {
        return Err(Error::UnreachableBudget {
            budgets: unreachable,
            available: stream_len,
        });
    }

    let dim = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ids = input_ids(&vocab, cfg.subwords);
    let n_input = vocab.len()
        + match cfg.subwords {
            Subwords::On { buckets, .. } => buckets,
            Subwords::Off => 0,
        };
    let bound = 1.0 / dim as f32;
    let input: Vec<f32> = (0..n_input * dim).map(|_| rng.random_range(-bound..bound)).collect();
    let mut model = Model {
        dim,
        input,
        output: vec![0f32; vocab.len() * dim],
        ids,
    };

    let noise = WeightedAliasIndex::new(vocab.counts.iter().map(|&c| (c as f64).powf(0.75)).collect())
        .map_err(|e| Error::Numerical(format!("noise distribution: {e}")))?;
    let keep_prob: Vec<f32> = vocab
        .counts
        .iter()
        .map(|&c| {
            let f = c as f64 / vocab.kept_tokens as f64;
            let r = cfg.subsample_t / f;
            (r.sqrt() + r).min(1.0) as f32
        })
        .collect();

    let mut snapshots = Vec::with_capacity(plan.len());
    let mut pending = plan.budgets().iter().copied().peekable();
    let mut consumed = 0u64;
    let mut sentence: Vec<u32> = Vec::new();
    let mut hidden = vec![0f32; dim];
    let mut grad = vec![0f32; dim];
    let mut offsets: Vec<u32> = Vec::new();
    let mut targets: Vec<(usize, bool)> = Vec::with_capacity(cfg.negatives + 1);

    for _epoch in 0..cfg.epochs {
        for w in bounds.windows(2) {
            let raw = &tokens[w[0]..w[1]];
            let progress = consumed as f64 / stream_len as f64;
            let lr = (cfg.learning_rate * (1.0 - progress)).max(0.0) as f32;

            sentence.clear();
            offsets.clear();
            for (i, &t) in raw.iter().enumerate() {
                if t != OOV && rng.random::<f32>() < keep_prob[t as usize] {
                    sentence.push(t);
                    offsets.push(i as u32);
                }
            }
            for pos in 0..sentence.len() {
                let center = sentence[pos] as usize;
                let b = rng.random_range(1..=cfg.window);
                let lo = pos.saturating_sub(b);
                let hi = (pos + b).min(sentence.len() - 1);
                for cpos in lo..=hi {
                    if cpos == pos {
                        continue;
                    }
                    let context = sentence[cpos] as usize;
                    targets.clear();
                    targets.push((context, true));
                    while targets.len() <= cfg.negatives {
                        let n = noise.sample(&mut rng);
                        if n != context {
                            targets.push((n, false));
                        }
                    }
                    model.hidden(center, &mut hidden);
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    if !step(&hidden, &targets, &mut model.output, lr, &mut grad, None) {
                        return Err(Error::Divergence {
                            position: consumed + offsets[pos] as u64,
                        });
                    }
                    model.apply_hidden_grad(center, &grad);
                }
            }

            consumed += raw.len() as u64;
            while let Some(&m) = pending.peek() {
                if consumed < m {
                    break;
                }
                snapshots.push(Snapshot {
                    budget: m,
                    consumed,
                    space: model.to_space(&vocab)?,
                });
                pending.next();
            }
        }
    }

    let final_space = model.to_space(&vocab)?;
    Ok(TrainOutput {
        snapshots,
        final_space,
        vocab,
        consumed,
        max_sentence_len,
    })
}
