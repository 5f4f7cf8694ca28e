//! Relational similarity (RSIM): correlation between the within-language
//! cosine similarity lists of translation pairs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dictionary::BilingualDictionary;
use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::similarity::cosine;

pub const DEFAULT_PAIRS: usize = 1000;
pub const DEFAULT_SEED: u64 = 1234;

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::param(format!("lists differ in length: {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(Error::param("pearson needs at least 3 values"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("a list has zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RsimParams {
    pub m_pairs: usize,
    /// Sort both similarity lists before correlating.
    pub sorted: bool,
    pub seed: u64,
}

impl Default for RsimParams {
    fn default() -> Self {
        RsimParams {
            m_pairs: DEFAULT_PAIRS,
            sorted: true,
            seed: DEFAULT_SEED,
        }
    }
}

/// The `m_pairs` one-to-one dictionary pairs used by RSIM, as row indices.
pub fn rsim_sample(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    dict: &BilingualDictionary,
    params: &RsimParams,
) -> Result<Vec<(usize, usize)>> {
    if params.m_pairs < 3 {
        return Err(Error::param("RSIM needs at least 3 pairs"));
    }
    let mut pairs = dict.one_to_one(source, target);
    if pairs.len() < params.m_pairs {
        return Err(Error::Coverage(format!(
            "RSIM needs {} one-to-one pairs, only {} usable",
            params.m_pairs,
            pairs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    pairs.shuffle(&mut rng);
    pairs.truncate(params.m_pairs);
    Ok(pairs)
}

/// Similarity lists over all unordered pairs of the sampled words, source
/// side first.
pub fn similarity_lists(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    pairs: &[(usize, usize)],
) -> (Vec<f64>, Vec<f64>) {
    let m = pairs.len();
    let mut xs = Vec::with_capacity(m * (m.saturating_sub(1)) / 2);
    let mut ys = Vec::with_capacity(xs.capacity());
    for i in 0..m {
        for j in i + 1..m {
            xs.push(cosine(source.row(pairs[i].0), source.row(pairs[j].0)));
            ys.push(cosine(target.row(pairs[i].1), target.row(pairs[j].1)));
        }
    }
    (xs, ys)
}

/// Relational similarity in `[-1, 1]`; higher means more isomorphic.
pub fn rsim(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    dict: &BilingualDictionary,
    params: &RsimParams,
) -> Result<f64> {
    let pairs = rsim_sample(source, target, dict, params)?;
    let (mut xs, mut ys) = similarity_lists(source, target, &pairs);
    if params.sorted {
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
    }
    pearson(&xs, &ys)
}
