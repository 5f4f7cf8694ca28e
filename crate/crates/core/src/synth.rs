//! Deterministic synthetic corpora and word-level substitution ciphers, for
//! running the training experiments without downloading text.
//!
//! Sentences are drawn from a topic mixture over a Zipfian vocabulary: each
//! sentence picks a topic, and each token comes either from the topic's own
//! word list, from the previous word's successor list, or from the global
//! unigram distribution. The cipher renames every word type, producing a
//! "translation" whose gold dictionary is known exactly.

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::dictionary::BilingualDictionary;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub vocab: usize,
    pub topics: usize,
    pub words_per_topic: usize,
    pub successors: usize,
    pub zipf_exponent: f64,
    /// Probabilities of drawing from the topic and from the successor list;
    /// the remainder goes to the global distribution.
    pub p_topic: f64,
    pub p_successor: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            vocab: 20_000,
            topics: 200,
            words_per_topic: 300,
            successors: 8,
            zipf_exponent: 1.0,
            p_topic: 0.4,
            p_successor: 0.3,
            min_len: 8,
            max_len: 30,
            seed: 42,
        }
    }
}

/// Pronounceable, distinct word forms: base-20 digits spelled as syllables.
pub fn word_form(i: usize) -> String {
    const SYL: [&str; 20] = [
        "ka", "lo", "mi", "nu", "pe", "ra", "si", "to", "vu", "ze", "ba", "do", "fi", "gu", "he", "ja", "ko", "li",
        "mo", "ne",
    ];
    let mut n = i;
    let mut s = String::new();
    loop {
        s.push_str(SYL[n % 20]);
        n /= 20;
        if n == 0 {
            break;
        }
    }
    s
}

pub struct SynthCorpus {
    params: SynthParams,
    words: Vec<String>,
    global: WeightedAliasIndex<f64>,
    topic_words: Vec<Vec<usize>>,
    topic_dist: WeightedAliasIndex<f64>,
    successors: Vec<Vec<usize>>,
}

impl SynthCorpus {
    pub fn new(params: SynthParams) -> Result<Self> {
        let p = &params;
        if p.vocab < 2 || p.topics == 0 || p.words_per_topic == 0 || p.successors == 0 {
            return Err(Error::param("vocab, topics, words_per_topic and successors must be positive"));
        }
        if p.min_len == 0 || p.min_len > p.max_len {
            return Err(Error::param("need 1 <= min_len <= max_len"));
        }
        if !(0.0..=1.0).contains(&(p.p_topic + p.p_successor)) || p.p_topic < 0.0 || p.p_successor < 0.0 {
            return Err(Error::param("mixture probabilities must lie in [0, 1]"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let zipf: Vec<f64> = (0..p.vocab).map(|r| 1.0 / ((r + 1) as f64).powf(p.zipf_exponent)).collect();
        let global = WeightedAliasIndex::new(zipf.clone()).map_err(|e| Error::Numerical(e.to_string()))?;
        let sample_words = |rng: &mut ChaCha8Rng, n: usize| -> Vec<usize> {
            let mut ws: Vec<usize> = (0..n).map(|_| global.sample(rng)).collect();
            ws.sort_unstable();
            ws.dedup();
            ws
        };
        let topic_words: Vec<Vec<usize>> = (0..p.topics).map(|_| sample_words(&mut rng, p.words_per_topic)).collect();
        let successors: Vec<Vec<usize>> = (0..p.vocab).map(|_| sample_words(&mut rng, p.successors)).collect();
        let topic_dist = WeightedAliasIndex::new(vec![1.0; p.topics]).map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(SynthCorpus {
            words: (0..p.vocab).map(word_form).collect(),
            params,
            global,
            topic_words,
            topic_dist,
            successors,
        })
    }

    /// Generates sentences until at least `tokens` tokens exist.
    pub fn generate(&self, tokens: u64) -> String {
        let p = &self.params;
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ 0x5eed);
        let mut out = String::with_capacity(tokens as usize * 6);
        let mut produced = 0u64;
        while produced < tokens {
            let topic = &self.topic_words[self.topic_dist.sample(&mut rng)];
            let len = rng.random_range(p.min_len..=p.max_len);
            let mut prev = self.global.sample(&mut rng);
            for i in 0..len {
                let u: f64 = rng.random();
                let w = if i == 0 {
                    prev
                } else if u < p.p_topic {
                    *topic.choose(&mut rng).expect("non-empty topic")
                } else if u < p.p_topic + p.p_successor {
                    *self.successors[prev].choose(&mut rng).expect("non-empty successors")
                } else {
                    self.global.sample(&mut rng)
                };
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(&self.words[w]);
                prev = w;
            }
            out.push('\n');
            produced += len as u64;
        }
        out
    }
}

/// A bijective renaming of word types.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cipher {
    map: HashMap<String, String>,
}

impl Cipher {
    /// Renames every distinct token of `text` to `<prefix><n>`, with the
    /// numbering a seeded permutation of first-occurrence order.
    pub fn for_text(text: &str, prefix: &str, seed: u64) -> Self {
        let mut seen: HashMap<&str, ()> = HashMap::new();
        let mut order = Vec::new();
        for tok in text.split_whitespace() {
            if seen.insert(tok, ()).is_none() {
                order.push(tok);
            }
        }
        let mut ids: Vec<usize> = (0..order.len()).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let map = order
            .into_iter()
            .zip(ids)
            .map(|(w, i)| (w.to_string(), format!("{prefix}{i}")))
            .collect();
        Cipher { map }
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.map.get(word).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Applies the cipher line by line; unknown tokens are kept.
    pub fn apply(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len() + text.len() / 4);
        for line in text.lines() {
            let mut first = true;
            for tok in line.split_whitespace() {
                if !first {
                    out.push(' ');
                }
                first = false;
                out.push_str(self.get(tok).unwrap_or(tok));
            }
            out.push('\n');
        }
        out
    }

    /// Gold dictionary for the given source words.
    pub fn dictionary<'a>(&self, name: &str, words: impl IntoIterator<Item = &'a str>) -> BilingualDictionary {
        BilingualDictionary::from_pairs(
            name,
            words.into_iter().filter_map(|w| self.get(w).map(|t| (w.to_string(), t.to_string()))),
        )
    }
}
