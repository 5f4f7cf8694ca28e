//! Bilingual lexicon induction: cosine retrieval and mean reciprocal rank.

use std::collections::BTreeMap;

use crate::dictionary::BilingualDictionary;
use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::similarity::{for_each_cosine_block, inverse_norms, top_k_indices};

pub const DEFAULT_CUTOFF: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct QueryResult {
    pub source: String,
    pub gold: Vec<String>,
    /// 1-based rank of the best-ranked gold translation, `None` beyond cutoff.
    pub rank: Option<usize>,
    pub bin: Option<String>,
}

impl QueryResult {
    pub fn reciprocal_rank(&self) -> f64 {
        self.rank.map_or(0.0, |r| 1.0 / r as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BliReport {
    pub mrr: f64,
    pub per_query: Vec<QueryResult>,
    /// Share of test pairs with both sides in vocabulary.
    pub coverage: f64,
    pub skipped: usize,
    pub cutoff: usize,
    pub bin_scores: BTreeMap<String, f64>,
}

impl BliReport {
    pub fn n_queries(&self) -> usize {
        self.per_query.len()
    }
}

/// The `top_k` target words closest to `query` by cosine, ties to the lower
/// target rank.
pub fn retrieve(
    query: &str,
    mapped_source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    top_k: usize,
) -> Result<Vec<String>> {
    let q = mapped_source
        .index_of(query)
        .ok_or_else(|| Error::OutOfVocabulary(query.to_string()))?;
    if mapped_source.dim() != target.dim() {
        return Err(Error::param("spaces differ in dimension"));
    }
    let scores = query_scores(mapped_source.row(q), target);
    Ok(top_k_indices(scores.into_iter(), top_k, None)
        .into_iter()
        .map(|j| target.word(j).to_string())
        .collect())
}

fn query_scores(q: &[f64], target: &EmbeddingSpace) -> Vec<f64> {
    let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let qn = if qn > 0.0 { 1.0 / qn } else { 0.0 };
    let tn = inverse_norms(target);
    (0..target.len())
        .map(|j| {
            let dot: f64 = q.iter().zip(target.row(j)).map(|(a, b)| a * b).sum();
            dot * qn * tn[j]
        })
        .collect()
}

/// 1-based position of `gold` when targets are sorted by descending score
/// with ties broken by lower index.
fn rank_of(scores: &[f64], gold: usize) -> usize {
    let g = scores[gold];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > g || (s == g && j < gold))
        .count()
}

struct Query {
    source: String,
    row: usize,
    gold: Vec<String>,
    gold_rows: Vec<usize>,
    bin: Option<String>,
}

/// Groups test pairs by source word, retrieves over the full target
/// vocabulary, and scores `1/rank` of the best gold translation (0 beyond
/// `cutoff`). Queries whose source or every gold word is out of vocabulary
/// are skipped and counted.
pub fn evaluate_mrr(
    mapped_source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    test: &BilingualDictionary,
    cutoff: usize,
) -> Result<BliReport> {
    if test.is_empty() {
        return Err(Error::param("test dictionary is empty"));
    }
    if cutoff == 0 {
        return Err(Error::param("cutoff must be positive"));
    }
    if mapped_source.dim() != target.dim() {
        return Err(Error::param("spaces differ in dimension"));
    }
    let coverage = test.coverage(mapped_source, target).fraction();

    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<&str, (Vec<String>, Option<String>)> = BTreeMap::new();
    for e in test.entries() {
        let g = groups.entry(&e.source).or_insert_with(|| {
            order.push(e.source.clone());
            (Vec::new(), e.bin.clone())
        });
        g.0.push(e.target.clone());
    }

    let mut queries = Vec::new();
    let mut skipped = 0;
    for source in &order {
        let (gold, bin) = &groups[source.as_str()];
        let row = mapped_source.index_of(source);
        let gold_rows: Vec<usize> = gold.iter().filter_map(|g| target.index_of(g)).collect();
        match row {
            Some(row) if !gold_rows.is_empty() => queries.push(Query {
                source: source.clone(),
                row,
                gold: gold.clone(),
                gold_rows,
                bin: bin.clone(),
            }),
            _ => skipped += 1,
        }
    }
    if queries.is_empty() {
        return Err(Error::Coverage(format!(
            "none of the {} test queries is in vocabulary",
            order.len()
        )));
    }

    // score all queries against the whole target vocabulary, block by block
    let rows: Vec<usize> = queries.iter().map(|q| q.row).collect();
    let qspace = gather(mapped_source, &rows)?;
    let mut ranks = vec![0usize; queries.len()];
    for_each_cosine_block(&qspace, qspace.len(), target, target.len(), |start, block| {
        for i in 0..block.ncols() {
            let scores = block.column(i);
            let scores = scores.as_slice();
            ranks[start + i] = queries[start + i]
                .gold_rows
                .iter()
                .map(|&g| rank_of(&scores, g))
                .min()
                .expect("non-empty gold");
        }
    });

    let per_query: Vec<QueryResult> = queries
        .into_iter()
        .zip(ranks)
        .map(|(q, rank)| QueryResult {
            source: q.source,
            gold: q.gold,
            rank: (rank <= cutoff).then_some(rank),
            bin: q.bin,
        })
        .collect();
    let mrr = mean_rr(per_query.iter());
    let mut bin_scores = BTreeMap::new();
    if test.has_bins() {
        let mut bins: BTreeMap<&str, Vec<&QueryResult>> = BTreeMap::new();
        for q in &per_query {
            if let Some(b) = &q.bin {
                bins.entry(b).or_default().push(q);
            }
        }
        for (b, qs) in bins {
            bin_scores.insert(b.to_string(), mean_rr(qs.into_iter()));
        }
    }
    Ok(BliReport {
        mrr,
        per_query,
        coverage,
        skipped,
        cutoff,
        bin_scores,
    })
}

fn mean_rr<'a>(qs: impl Iterator<Item = &'a QueryResult>) -> f64 {
    let (sum, n) = qs.fold((0.0, 0usize), |(s, n), q| (s + q.reciprocal_rank(), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn gather(space: &EmbeddingSpace, rows: &[usize]) -> Result<EmbeddingSpace> {
    let words = (0..rows.len()).map(|i| i.to_string()).collect();
    let data = rows.iter().flat_map(|&r| space.row(r).iter().copied()).collect();
    EmbeddingSpace::new(words, data, space.dim())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(words: &[&str], rows: &[[f64; 2]]) -> EmbeddingSpace {
        EmbeddingSpace::from_rows(
            words.iter().map(|w| w.to_string()).collect(),
            &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn retrieve_orders_and_rejects_oov() {
        let t = space(&["x", "y", "z"], &[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let s = space(&["q"], &[[1.0, 0.1]]);
        assert_eq!(retrieve("q", &s, &t, 3).unwrap(), vec!["x", "z", "y"]);
        assert_eq!(retrieve("q", &s, &t, 1).unwrap(), vec!["x"]);
        assert!(matches!(retrieve("nope", &s, &t, 1), Err(Error::OutOfVocabulary(_))));
    }

    #[test]
    fn gold_at_rank_two_gives_half() {
        // each query's nearest target is a decoy; the gold comes second
        let s = space(&["a", "b"], &[[1.0, 0.0], [0.0, 1.0]]);
        let t = space(
            &["da", "ga", "db", "gb"],
            &[[1.0, 0.01], [1.0, 0.2], [0.01, 1.0], [0.2, 1.0]],
        );
        let test = BilingualDictionary::from_pairs("t", [("a", "ga"), ("b", "gb")]);
        let r = evaluate_mrr(&s, &t, &test, 10).unwrap();
        assert_eq!(r.mrr, 0.5);
        let r = evaluate_mrr(&s, &t, &test, 1).unwrap();
        assert_eq!(r.mrr, 0.0);
    }

    #[test]
    fn skips_and_counts_oov() {
        let s = space(&["a", "b"], &[[1.0, 0.0], [0.0, 1.0]]);
        let t = space(&["x", "y"], &[[1.0, 0.0], [0.0, 1.0]]);
        let test = BilingualDictionary::from_pairs("t", [("a", "x"), ("b", "nope"), ("c", "y")]);
        let r = evaluate_mrr(&s, &t, &test, 10).unwrap();
        assert_eq!(r.n_queries(), 1);
        assert_eq!(r.skipped, 2);
        assert!((r.coverage - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.mrr, 1.0);
        let none = BilingualDictionary::from_pairs("t", [("c", "y")]);
        assert!(matches!(evaluate_mrr(&s, &t, &none, 10), Err(Error::Coverage(_))));
    }

    #[test]
    fn multiple_golds_take_best_rank() {
        let s = space(&["a"], &[[1.0, 0.0]]);
        let t = space(&["x", "y", "z"], &[[1.0, 0.0], [0.8, 0.6], [0.0, 1.0]]);
        let test = BilingualDictionary::from_pairs("t", [("a", "z"), ("a", "y")]);
        let r = evaluate_mrr(&s, &t, &test, 10).unwrap();
        assert_eq!(r.per_query[0].rank, Some(2));
        assert_eq!(r.per_query[0].gold, vec!["z", "y"]);
    }

    #[test]
    fn bin_scores() {
        let s = space(&["a", "b"], &[[1.0, 0.0], [0.0, 1.0]]);
        let t = space(&["x", "y"], &[[1.0, 0.0], [0.0, 1.0]]);
        let test = crate::dictionary::read_dictionary("a x HFREQ\nb x LFREQ\n".as_bytes(), "t").unwrap();
        let r = evaluate_mrr(&s, &t, &test, 10).unwrap();
        assert_eq!(r.bin_scores["HFREQ"], 1.0);
        assert_eq!(r.bin_scores["LFREQ"], 0.5);
        assert_eq!(r.mrr, 0.75);
    }
}
