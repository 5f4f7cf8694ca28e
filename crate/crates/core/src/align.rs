//! Supervised orthogonal alignment (Procrustes) with an optional
//! self-learning loop that grows the training dictionary from mutual nearest
//! neighbours.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::dictionary::{BilingualDictionary, Entry};
use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::similarity::for_each_cosine_block;

pub const DEFAULT_TOP_F: usize = 10_000;
pub const DEFAULT_ROUNDS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalMap {
    pub w: DMatrix<f64>,
    pub trained_on: String,
    /// Self-learning rounds performed after the initial solve.
    pub iterations: usize,
    /// Induced dictionary size after each self-learning round.
    pub induced_sizes: Vec<usize>,
}

impl OrthogonalMap {
    pub fn identity(dim: usize) -> Self {
        OrthogonalMap {
            w: DMatrix::identity(dim, dim),
            trained_on: String::new(),
            iterations: 0,
            induced_sizes: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// `||W^T W - I||_F`
    pub fn orthogonality_error(&self) -> f64 {
        let d = self.dim();
        (self.w.tr_mul(&self.w) - DMatrix::<f64>::identity(d, d)).norm()
    }

    pub fn transpose(&self) -> Self {
        OrthogonalMap {
            w: self.w.transpose(),
            ..self.clone()
        }
    }
}

/// Orthogonal `W` minimising `||XW - Y||_F` over the usable dictionary pairs:
/// `W = U V^T` for the SVD `X^T Y = U S V^T`.
pub fn procrustes(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    dict: &BilingualDictionary,
) -> Result<OrthogonalMap> {
    let pairs = dict.usable_pairs(source, target);
    let mut map = procrustes_pairs(source, target, &pairs)?;
    map.trained_on = dict.name.clone();
    Ok(map)
}

pub(crate) fn procrustes_pairs(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    pairs: &[(usize, usize)],
) -> Result<OrthogonalMap> {
    let d = source.dim();
    if target.dim() != d {
        return Err(Error::param(format!("dimension mismatch: {} vs {}", d, target.dim())));
    }
    if pairs.is_empty() {
        return Err(Error::Coverage("no dictionary pair has both words in vocabulary".into()));
    }
    if pairs.len() < d {
        log::warn!("only {} usable pairs for a {d}-dimensional map", pairs.len());
    }
    let mut m = DMatrix::<f64>::zeros(d, d);
    for &(s, t) in pairs {
        let x = source.row(s);
        let y = target.row(t);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, &yj) in y.iter().enumerate() {
                m[(i, j)] += xi * yj;
            }
        }
    }
    let svd = m.try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numerical("SVD factors missing".into())),
    };
    Ok(OrthogonalMap {
        w: u * v_t,
        trained_on: String::new(),
        iterations: 0,
        induced_sizes: Vec::new(),
    })
}

/// Row `i` of the result is row `i` of `space` times `W`.
pub fn apply_map(space: &EmbeddingSpace, map: &OrthogonalMap) -> Result<EmbeddingSpace> {
    if map.dim() != space.dim() || map.w.ncols() != space.dim() {
        return Err(Error::param(format!(
            "map is {}x{}, space has dimension {}",
            map.w.nrows(),
            map.w.ncols(),
            space.dim()
        )));
    }
    // columns of the view are word vectors: (xW)^T = W^T x^T
    let out = map.w.tr_mul(&space.view());
    space.with_data(out.as_slice().to_vec())
}

/// Mutual cosine nearest neighbours among the `top_f` most frequent words of
/// each side; ties go to the lower rank.
pub fn induce_dictionary(
    mapped_source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    top_f: usize,
) -> BilingualDictionary {
    let pairs = mutual_nn(mapped_source, target, top_f);
    BilingualDictionary::from_pairs(
        "induced",
        pairs
            .into_iter()
            .map(|(s, t)| (mapped_source.word(s).to_string(), target.word(t).to_string())),
    )
}

pub(crate) fn mutual_nn(source: &EmbeddingSpace, target: &EmbeddingSpace, top_f: usize) -> Vec<(usize, usize)> {
    let ns = top_f.min(source.len());
    let nt = top_f.min(target.len());
    if ns < top_f || nt < top_f {
        log::warn!("top_f = {top_f} clipped to {ns} source / {nt} target words");
    }
    if ns == 0 || nt == 0 {
        return Vec::new();
    }
    let mut fwd = vec![0usize; ns];
    let mut back: Vec<(f64, usize)> = vec![(f64::NEG_INFINITY, usize::MAX); nt];
    for_each_cosine_block(source, ns, target, nt, |start, block| {
        for i in 0..block.ncols() {
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (j, &v) in block.column(i).iter().enumerate() {
                if v > best.0 {
                    best = (v, j);
                }
                // blocks arrive in increasing source rank, so strict > keeps
                // the lower rank on ties
                if v > back[j].0 {
                    back[j] = (v, start + i);
                }
            }
            fwd[start + i] = best.1;
        }
    });
    (0..ns).filter(|&s| back[fwd[s]].1 == s).map(|s| (s, fwd[s])).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelfLearnParams {
    pub max_rounds: usize,
    pub top_f: usize,
}

impl Default for SelfLearnParams {
    fn default() -> Self {
        SelfLearnParams {
            max_rounds: DEFAULT_ROUNDS,
            top_f: DEFAULT_TOP_F,
        }
    }
}

/// Procrustes on the seed, then repeatedly: map, induce mutual nearest
/// neighbours, merge with the seed (seed pairs win conflicts), re-solve.
/// Stops once the induced set repeats or after `max_rounds` rounds.
pub fn self_learn(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    seed: &BilingualDictionary,
    params: &SelfLearnParams,
) -> Result<OrthogonalMap> {
    let seed_pairs = seed.usable_pairs(source, target);
    let mut map = procrustes_pairs(source, target, &seed_pairs)?;
    map.trained_on = seed.name.clone();
    let seed_src: HashSet<usize> = seed_pairs.iter().map(|p| p.0).collect();
    let seed_tgt: HashSet<usize> = seed_pairs.iter().map(|p| p.1).collect();

    let mut previous: Option<Vec<(usize, usize)>> = None;
    for round in 1..=params.max_rounds {
        let mapped = apply_map(source, &map)?;
        let induced = mutual_nn(&mapped, target, params.top_f);
        if previous.as_ref() == Some(&induced) {
            break;
        }
        let mut pairs = seed_pairs.clone();
        pairs.extend(
            induced
                .iter()
                .filter(|(s, t)| !seed_src.contains(s) && !seed_tgt.contains(t)),
        );
        let mut next = procrustes_pairs(source, target, &pairs)?;
        next.trained_on = seed.name.clone();
        next.iterations = round;
        next.induced_sizes = map.induced_sizes.clone();
        next.induced_sizes.push(induced.len());
        map = next;
        previous = Some(induced);
    }
    Ok(map)
}

/// Union of seed and induced dictionaries as used in the last round, mainly
/// for inspection.
pub fn merged_dictionary(seed: &BilingualDictionary, induced: &BilingualDictionary) -> BilingualDictionary {
    let src: HashSet<&str> = seed.pairs().map(|p| p.0).collect();
    let tgt: HashSet<&str> = seed.pairs().map(|p| p.1).collect();
    let extra = induced
        .entries()
        .iter()
        .filter(|e| !src.contains(e.source.as_str()) && !tgt.contains(e.target.as_str()))
        .cloned();
    BilingualDictionary::new(
        format!("{}+induced", seed.name),
        seed.entries().iter().cloned().chain(extra).collect::<Vec<Entry>>(),
    )
}

/// `d` lines of `d` numbers, row-major.
pub fn save_map(map: &OrthogonalMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in 0..map.w.nrows() {
        let row: Vec<String> = (0..map.w.ncols()).map(|c| format!("{}", map.w[(r, c)])).collect();
        writeln!(out, "{}", row.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_map(path: impl AsRef<Path>) -> Result<OrthogonalMap> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("bad number {t:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Parse {
            line: 1,
            msg: "map file must hold a square matrix".into(),
        });
    }
    Ok(OrthogonalMap {
        w: DMatrix::from_row_iterator(d, d, rows.into_iter().flatten()),
        trained_on: path.display().to_string(),
        iterations: 0,
        induced_sizes: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(rows: &[Vec<f64>]) -> EmbeddingSpace {
        EmbeddingSpace::from_rows((0..rows.len()).map(|i| format!("w{i}")).collect(), rows).unwrap()
    }

    #[test]
    fn identity_recovered() {
        let s = space(&[vec![1.0, 0.2, 0.0], vec![0.0, 1.0, 0.3], vec![0.5, 0.5, 1.0]]);
        let m = procrustes(&s, &s, &BilingualDictionary::identity(&s)).unwrap();
        assert!((m.w.clone() - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-9);
    }

    #[test]
    fn quarter_turn() {
        let src = space(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let tgt = space(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let m = procrustes(&src, &tgt, &BilingualDictionary::identity(&src)).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!((m.w.clone() - want).abs().max() < 1e-9);
        assert!(m.orthogonality_error() < 1e-12);
    }

    #[test]
    fn no_usable_pairs() {
        let s = space(&[vec![1.0, 0.0]]);
        let d = BilingualDictionary::from_pairs("d", [("nope", "w0")]);
        assert!(matches!(procrustes(&s, &s, &d), Err(Error::Coverage(_))));
    }

    #[test]
    fn apply_map_checks_dimension() {
        let s = space(&[vec![1.0, 0.0]]);
        assert!(apply_map(&s, &OrthogonalMap::identity(3)).is_err());
        assert_eq!(apply_map(&s, &OrthogonalMap::identity(2)).unwrap(), s);
    }

    #[test]
    fn only_mutual_pairs_survive() {
        // a 4-cycle s0 -> t0 -> s1 -> t1 -> s0 cannot exist (the most similar
        // pair is always mutual), so check the one-sided case instead
        let src = space(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let a = 30f64.to_radians();
        let b = -60f64.to_radians();
        let tgt = space(&[vec![a.cos(), a.sin()], vec![b.cos(), b.sin()]]);
        let cos = |x: &[f64], y: &[f64]| x[0] * y[0] + x[1] * y[1];
        let nn = |q: &[f64], keys: &EmbeddingSpace| {
            if cos(q, keys.row(0)) >= cos(q, keys.row(1)) { 0 } else { 1 }
        };
        let s_nn: Vec<usize> = (0..2).map(|i| nn(src.row(i), &tgt)).collect();
        let t_nn: Vec<usize> = (0..2).map(|j| nn(tgt.row(j), &src)).collect();
        assert_eq!(s_nn, vec![0, 0]);
        assert_eq!(t_nn, vec![0, 0]);
        let d = induce_dictionary(&src, &tgt, 2);
        assert_eq!(d.pairs().collect::<Vec<_>>(), vec![("w0", "w0")]);
    }

    #[test]
    fn zero_rounds_is_plain_procrustes() {
        let s = space(&[vec![1.0, 0.3], vec![0.2, 1.0], vec![-0.4, 0.9]]);
        let t = space(&[vec![0.9, 0.1], vec![0.3, 1.1], vec![-0.5, 1.0]]);
        let seed = BilingualDictionary::identity(&s);
        let a = procrustes(&s, &t, &seed).unwrap();
        let b = self_learn(&s, &t, &seed, &SelfLearnParams { max_rounds: 0, top_f: 3 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn map_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.txt");
        let m = OrthogonalMap {
            w: DMatrix::from_row_slice(2, 2, &[0.6, 0.8, -0.8, 0.6]),
            ..OrthogonalMap::identity(2)
        };
        save_map(&m, &path).unwrap();
        assert_eq!(load_map(&path).unwrap().w, m.w);
    }
}
