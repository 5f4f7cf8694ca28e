//! Blocked cosine similarity between the rows of two spaces.

use nalgebra::DMatrix;

use crate::embeddings::EmbeddingSpace;

const BLOCK: usize = 64;

pub(crate) fn inverse_norms(space: &EmbeddingSpace) -> Vec<f64> {
    (0..space.len())
        .map(|i| {
            let n = space.norm(i);
            if n > 0.0 {
                1.0 / n
            } else {
                0.0
            }
        })
        .collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Calls `f(row_start, block)` for consecutive blocks of query rows, where
/// `block[(j, i)]` is the cosine between query `row_start + i` (restricted to
/// the first `n_queries` rows of `queries`) and row `j` of `keys` (restricted
/// to the first `n_keys` rows). Each query's scores form one contiguous column.
pub(crate) fn for_each_cosine_block<F>(
    queries: &EmbeddingSpace,
    n_queries: usize,
    keys: &EmbeddingSpace,
    n_keys: usize,
    mut f: F,
) where
    F: FnMut(usize, &DMatrix<f64>),
{
    assert_eq!(queries.dim(), keys.dim(), "dimension mismatch");
    let qn = inverse_norms(queries);
    let kn = inverse_norms(keys);
    let kt = keys.view().columns(0, n_keys).transpose();
    let qview = queries.view();
    let mut start = 0;
    while start < n_queries {
        let len = BLOCK.min(n_queries - start);
        let mut block = &kt * qview.columns(start, len);
        for i in 0..len {
            let qi = qn[start + i];
            for (v, kj) in block.column_mut(i).iter_mut().zip(&kn) {
                *v *= qi * kj;
            }
        }
        f(start, &block);
        start += len;
    }
}

/// Indices `0..n` of the `k` largest `scores`, descending, ties to the lower
/// index.
pub(crate) fn top_k_indices(scores: impl Iterator<Item = f64>, k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (j, s) in scores.enumerate() {
        if Some(j) == skip {
            continue;
        }
        if best.len() == k {
            let (ws, _) = best[k - 1];
            // equal scores keep the earlier (lower-rank) entry
            if s <= ws {
                continue;
            }
        }
        let pos = best.partition_point(|&(bs, _)| bs >= s);
        best.insert(pos, (s, j));
        best.truncate(k);
    }
    best.into_iter().map(|(_, j)| j).collect()
}
