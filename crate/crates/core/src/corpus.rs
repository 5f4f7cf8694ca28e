//! Corpus sampling: nested shuffled samples, document-budgeted sampling,
//! frequency bins and binned test dictionaries.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dictionary::{BilingualDictionary, Entry};
use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};

pub fn count_tokens(line: &str) -> u64 {
    line.split_whitespace().count() as u64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TokenCount {
    pub sentences: u64,
    pub tokens: u64,
}

pub fn token_count(path: impl AsRef<Path>) -> Result<TokenCount> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut count = TokenCount::default();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        count.sentences += 1;
        count.tokens += count_tokens(&line);
    }
    Ok(count)
}

pub fn token_count_text(text: &str) -> TokenCount {
    text.lines().fold(TokenCount::default(), |c, l| TokenCount {
        sentences: c.sentences + 1,
        tokens: c.tokens + count_tokens(l),
    })
}

/// Sentence indices of the seeded permutation's first `n` entries, for each
/// requested size. Sizes must be ascending and at most `n_sentences`.
pub fn nested_sample_indices(n_sentences: usize, seed: u64, sizes: &[usize]) -> Result<Vec<Vec<usize>>> {
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param(format!("sample sizes must be strictly ascending: {sizes:?}")));
    }
    if let Some(&max) = sizes.last() {
        if max > n_sentences {
            return Err(Error::param(format!(
                "sample size {max} exceeds corpus of {n_sentences} sentences"
            )));
        }
    }
    let mut perm: Vec<usize> = (0..n_sentences).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(sizes.iter().map(|&n| perm[..n].to_vec()).collect())
}

/// Nested samples as in-memory sentence lists.
pub fn shuffle_sample_lines<'a>(lines: &[&'a str], seed: u64, sizes: &[usize]) -> Result<Vec<Vec<&'a str>>> {
    Ok(nested_sample_indices(lines.len(), seed, sizes)?
        .into_iter()
        .map(|idx| idx.into_iter().map(|i| lines[i]).collect())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleFile {
    pub path: PathBuf,
    pub sentences: usize,
    pub tokens: u64,
}

/// Writes `<out_prefix>.<size>.txt` for every size. Smaller samples are
/// prefixes of larger ones.
pub fn shuffle_sample(
    corpus: impl AsRef<Path>,
    seed: u64,
    sizes: &[usize],
    out_prefix: impl AsRef<Path>,
) -> Result<Vec<SampleFile>> {
    let corpus = corpus.as_ref();
    let text = fs::read_to_string(corpus).map_err(|e| Error::io(corpus, e))?;
    let lines: Vec<&str> = text.lines().collect();
    let samples = shuffle_sample_lines(&lines, seed, sizes)?;
    let prefix = out_prefix.as_ref().as_os_str().to_string_lossy().into_owned();
    let mut out = Vec::with_capacity(sizes.len());
    for (size, sample) in sizes.iter().zip(samples) {
        let path = PathBuf::from(format!("{prefix}.{size}.txt"));
        write_lines(&path, sample.iter().copied())?;
        out.push(SampleFile {
            path,
            sentences: *size,
            tokens: sample.iter().map(|l| count_tokens(l)).sum(),
        });
    }
    Ok(out)
}

pub fn write_lines<'a>(path: &Path, lines: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<String>,
    pub tokens: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DocCorpus {
    documents: Vec<Document>,
    index: HashMap<String, usize>,
    total_tokens: u64,
}

impl DocCorpus {
    pub fn new(docs: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut corpus = DocCorpus::default();
        for (id, sentences) in docs {
            if corpus.index.contains_key(&id) {
                return Err(Error::param(format!("duplicate document id {id:?}")));
            }
            let tokens = sentences.iter().map(|s| count_tokens(s)).sum();
            corpus.total_tokens += tokens;
            corpus.index.insert(id.clone(), corpus.documents.len());
            corpus.documents.push(Document { id, sentences, tokens });
        }
        Ok(corpus)
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.documents[i])
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// Parses blocks headed by `#doc <id>` lines; blank lines are dropped.
pub fn read_doc_corpus(reader: impl BufRead) -> Result<DocCorpus> {
    let mut docs: Vec<(String, Vec<String>)> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { line: n + 1, msg: e.to_string() })?;
        if let Some(rest) = line.strip_prefix("#doc") {
            let id = rest.trim();
            if id.is_empty() || !rest.starts_with(char::is_whitespace) {
                return Err(Error::Parse { line: n + 1, msg: "expected `#doc <id>`".into() });
            }
            docs.push((id.to_string(), Vec::new()));
        } else if !line.trim().is_empty() {
            match docs.last_mut() {
                Some(d) => d.1.push(line),
                None => {
                    return Err(Error::Parse { line: n + 1, msg: "sentence before the first `#doc` line".into() })
                }
            }
        }
    }
    DocCorpus::new(docs)
}

pub fn load_doc_corpus(path: impl AsRef<Path>) -> Result<DocCorpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_doc_corpus(BufReader::new(file))
}

/// One-to-one map from documents of corpus A to documents of corpus B.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DocAlignment {
    pairs: Vec<(String, String)>,
}

impl DocAlignment {
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self> {
        let mut a = HashSet::new();
        let mut b = HashSet::new();
        for (x, y) in &pairs {
            if !a.insert(x) || !b.insert(y) {
                return Err(Error::param(format!("alignment is not one-to-one at {x} {y}")));
            }
        }
        Ok(DocAlignment { pairs })
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn read_alignment(reader: impl BufRead) -> Result<DocAlignment> {
    let mut pairs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { line: n + 1, msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse { line: n + 1, msg: format!("expected 2 fields, found {}", fields.len()) });
        }
        pairs.push((fields[0].to_string(), fields[1].to_string()));
    }
    DocAlignment::new(pairs)
}

pub fn load_alignment(path: impl AsRef<Path>) -> Result<DocAlignment> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_alignment(BufReader::new(file))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DocBudget {
    pub rich_id: String,
    pub poor_id: String,
    pub budget: u64,
    pub selected: u64,
    /// Tokens missing when the rich document ran out.
    pub shortfall: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopicSample {
    /// Selected sentences in document order, then selection order.
    pub sentences: Vec<String>,
    pub report: Vec<DocBudget>,
}

impl TopicSample {
    pub fn total_budget(&self) -> u64 {
        self.report.iter().map(|r| r.budget).sum()
    }

    pub fn total_selected(&self) -> u64 {
        self.report.iter().map(|r| r.selected).sum()
    }
}

/// For each aligned pair, draws sentences of the rich document in a seeded
/// random order until their tokens first reach the poor document's token
/// count. Pairs whose ids are missing from either corpus are rejected.
pub fn topic_adjusted_sample(
    rich: &DocCorpus,
    poor: &DocCorpus,
    alignment: &DocAlignment,
    seed: u64,
) -> Result<TopicSample> {
    if alignment.is_empty() {
        return Err(Error::param("document alignment is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::new();
    let mut report = Vec::with_capacity(alignment.len());
    for (a, b) in alignment.pairs() {
        let doc_a = rich
            .get(a)
            .ok_or_else(|| Error::param(format!("document {a:?} not in the rich corpus")))?;
        let doc_b = poor
            .get(b)
            .ok_or_else(|| Error::param(format!("document {b:?} not in the poor corpus")))?;
        let budget = doc_b.tokens;
        let mut order: Vec<usize> = (0..doc_a.sentences.len()).collect();
        order.shuffle(&mut rng);
        let mut selected = 0;
        for i in order {
            if selected >= budget {
                break;
            }
            selected += count_tokens(&doc_a.sentences[i]);
            sentences.push(doc_a.sentences[i].clone());
        }
        report.push(DocBudget {
            rich_id: a.clone(),
            poor_id: b.clone(),
            budget,
            selected,
            shortfall: budget.saturating_sub(selected),
        });
    }
    Ok(TopicSample { sentences, report })
}

/// Named, non-overlapping frequency-rank intervals `[lo, hi)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyBins {
    bins: Vec<(String, usize, usize)>,
}

impl Default for FrequencyBins {
    fn default() -> Self {
        FrequencyBins {
            bins: vec![
                ("HFREQ".into(), 0, 5_000),
                ("MFREQ".into(), 10_000, 20_000),
                ("LFREQ".into(), 20_000, 50_000),
            ],
        }
    }
}

impl FrequencyBins {
    pub fn new(bins: Vec<(String, usize, usize)>) -> Result<Self> {
        for (name, lo, hi) in &bins {
            if lo >= hi {
                return Err(Error::param(format!("bin {name} has empty interval [{lo}, {hi})")));
            }
        }
        let mut sorted: Vec<_> = bins.iter().collect();
        sorted.sort_by_key(|b| b.1);
        if sorted.windows(2).any(|w| w[0].2 > w[1].1) {
            return Err(Error::param("frequency bins overlap"));
        }
        Ok(FrequencyBins { bins })
    }

    pub fn bins(&self) -> &[(String, usize, usize)] {
        &self.bins
    }

    pub fn bin_of(&self, rank: usize) -> Option<&str> {
        self.bins
            .iter()
            .find(|(_, lo, hi)| (*lo..*hi).contains(&rank))
            .map(|b| b.0.as_str())
    }
}

/// Words of `space` per bin, in rank order. Bins reaching past the
/// vocabulary are clipped with a warning.
pub fn frequency_bins(space: &EmbeddingSpace, bins: &FrequencyBins) -> BTreeMap<String, Vec<String>> {
    let v = space.len();
    let mut out = BTreeMap::new();
    for (name, lo, hi) in bins.bins() {
        if *hi > v {
            log::warn!("bin {name} [{lo}, {hi}) clipped to a vocabulary of {v} words");
        }
        let words = (*lo.min(&v)..*hi.min(&v)).map(|r| space.word(r).to_string()).collect();
        out.insert(name.clone(), words);
    }
    out
}

/// Samples `per_bin` source words per bin that have lexicon translations and
/// are not excluded, with no source reused across bins; every translation of
/// a sampled word is kept.
pub fn build_test_dict(
    bin_words: &BTreeMap<String, Vec<String>>,
    lexicon: &BilingualDictionary,
    per_bin: usize,
    seed: u64,
    exclusions: &HashSet<String>,
) -> Result<BilingualDictionary> {
    let mut translations: HashMap<&str, Vec<&str>> = HashMap::new();
    for e in lexicon.entries() {
        translations.entry(&e.source).or_default().push(&e.target);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used: HashSet<&str> = HashSet::new();
    let mut entries = Vec::new();
    let mut deficits = Vec::new();
    for (bin, words) in bin_words {
        let mut candidates: Vec<&str> = words
            .iter()
            .map(String::as_str)
            .filter(|w| translations.contains_key(w) && !exclusions.contains(*w) && !used.contains(w))
            .collect();
        candidates.dedup();
        if candidates.len() < per_bin {
            deficits.push(format!("{bin}: {} of {per_bin} (short by {})", candidates.len(), per_bin - candidates.len()));
            continue;
        }
        candidates.shuffle(&mut rng);
        for &w in &candidates[..per_bin] {
            used.insert(w);
            for &t in &translations[w] {
                entries.push(Entry {
                    source: w.to_string(),
                    target: t.to_string(),
                    bin: Some(bin.clone()),
                });
            }
        }
    }
    if !deficits.is_empty() {
        return Err(Error::Coverage(format!("insufficient lexicon coverage: {}", deficits.join("; "))));
    }
    Ok(BilingualDictionary::new("test", entries))
}
