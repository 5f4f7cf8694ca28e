//! Word vector spaces and the `.vec` text format.
//!
//! A space keeps its vocabulary in file order, which is treated as descending
//! corpus frequency (rank 0 is the most frequent word). Vectors are stored
//! row-major as `f64`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct EmbeddingSpace {
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    dim: usize,
    counts: Option<Vec<u64>>,
}

impl PartialEq for EmbeddingSpace {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.words == other.words
            && self.data == other.data
            && self.counts == other.counts
    }
}

impl EmbeddingSpace {
    /// Builds a space from words and a row-major `words.len() x dim` buffer.
    pub fn new(words: Vec<String>, data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dimension must be positive"));
        }
        if data.len() != words.len() * dim {
            return Err(Error::param(format!(
                "matrix has {} entries, expected {} x {}",
                data.len(),
                words.len(),
                dim
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!(
                "non-finite value in row of word {:?}",
                words[pos / dim]
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::DuplicateWord {
                    word: w.clone(),
                    line: i + 2,
                });
            }
        }
        Ok(EmbeddingSpace {
            words,
            index,
            data,
            dim,
            counts: None,
        })
    }

    pub fn from_rows(words: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::param("rows have unequal lengths"));
        }
        Self::new(words, rows.concat(), dim)
    }

    /// Attaches per-word corpus counts, which must be non-increasing.
    pub fn with_counts(mut self, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != self.len() {
            return Err(Error::param("one count per word required"));
        }
        if counts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::param("counts must be non-increasing in rank order"));
        }
        self.counts = Some(counts);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Column-major `dim x V` view over the row-major buffer: column `i` is
    /// the vector of word `i`.
    pub fn view(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.dim, self.len())
    }

    /// `V x dim` owned copy.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }

    /// Same vocabulary, new row-major values.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(Error::param("replacement matrix has a different shape"));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value in row of word {:?}",
                self.words[pos / self.dim]
            )));
        }
        Ok(EmbeddingSpace {
            words: self.words.clone(),
            index: self.index.clone(),
            data,
            dim: self.dim,
            counts: self.counts.clone(),
        })
    }

    /// Replaces the vectors with the rows of a `V x dim` matrix.
    pub fn with_matrix(&self, m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != self.len() || m.ncols() != self.dim {
            return Err(Error::param("replacement matrix has a different shape"));
        }
        // transpose into a column-major dim x V buffer == row-major V x dim
        let t = m.transpose();
        self.with_data(t.as_slice().to_vec())
    }

    /// The `n` most frequent words (clipped to V).
    pub fn top(&self, n: usize) -> Self {
        let n = n.min(self.len());
        EmbeddingSpace {
            words: self.words[..n].to_vec(),
            index: self.words[..n]
                .iter()
                .enumerate()
                .map(|(i, w)| (w.clone(), i))
                .collect(),
            data: self.data[..n * self.dim].to_vec(),
            dim: self.dim,
            counts: self.counts.as_ref().map(|c| c[..n].to_vec()),
        }
    }

    pub fn norm(&self, idx: usize) -> f64 {
        self.row(idx).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Reads a `.vec` file, keeping at most `limit` rows.
pub fn load_embeddings(path: impl AsRef<Path>, limit: Option<usize>) -> Result<EmbeddingSpace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), limit).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_embeddings<R: BufRead>(reader: R, limit: Option<usize>) -> Result<EmbeddingSpace> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io("<reader>", e))?,
        None => return Err(Error::Parse { line: 1, msg: "missing header".into() }),
    };
    let head: Vec<&str> = fields(&header).collect();
    let parse_usize = |s: &str| {
        s.parse::<usize>().map_err(|_| Error::Parse {
            line: 1,
            msg: format!("header field {s:?} is not a non-negative integer"),
        })
    };
    if head.len() != 2 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header must be \"V d\", got {header:?}"),
        });
    }
    let n_words = parse_usize(head[0])?;
    let dim = parse_usize(head[1])?;
    if dim == 0 {
        return Err(Error::Parse { line: 1, msg: "dimension must be positive".into() });
    }
    let take = limit.map_or(n_words, |l| l.min(n_words));

    let mut words = Vec::with_capacity(take);
    let mut data = Vec::with_capacity(take * dim);
    let mut seen = HashMap::with_capacity(take);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if words.len() == take {
            if limit.is_none() && !line.trim().is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("more rows than the {n_words} declared in the header"),
                });
            }
            break;
        }
        let mut it = fields(&line);
        let word = it.next().ok_or_else(|| Error::Parse {
            line: lineno,
            msg: "empty row".into(),
        })?;
        let mut n = 0;
        for tok in it {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad number {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("non-finite value {tok:?}"),
                });
            }
            data.push(v);
            n += 1;
        }
        if n != dim {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {dim} values, found {n}"),
            });
        }
        if seen.insert(word.to_string(), words.len()).is_some() {
            return Err(Error::DuplicateWord { word: word.to_string(), line: lineno });
        }
        words.push(word.to_string());
    }
    if words.len() < take {
        return Err(Error::Parse {
            line: words.len() + 2,
            msg: format!("header declares {n_words} rows, file has {}", words.len()),
        });
    }
    EmbeddingSpace::new(words, data, dim)
}

// single spaces separate fields; a trailing space (fastText style) and a
// trailing carriage return are tolerated
fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.trim_end_matches(['\r', '\n'])
        .split(' ')
        .filter(|s| !s.is_empty())
}

pub fn save_embeddings(space: &EmbeddingSpace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_embeddings(space, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_embeddings<W: Write>(space: &EmbeddingSpace, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{} {}", space.len(), space.dim())?;
    let mut line = String::new();
    for (word, row) in space.words().iter().zip(space.rows()) {
        line.clear();
        line.push_str(word);
        for &v in row {
            line.push(' ');
            push_number(&mut line, v);
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Shortest decimal that reads back to the same value; values that came from
/// `f32` training are printed at `f32` precision.
fn push_number(buf: &mut String, v: f64) {
    let narrow = v as f32;
    if narrow as f64 == v {
        let _ = write!(buf, "{narrow}");
    } else {
        let _ = write!(buf, "{v}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<EmbeddingSpace> {
        read_embeddings(text.as_bytes(), None)
    }

    #[test]
    fn reads_simple_file() {
        let s = parse("2 3\na 1 0 0\nb 0 1 0").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dim(), 3);
        assert_eq!(s.words(), &["a".to_string(), "b".to_string()]);
        assert_eq!(s.row(1), &[0.0, 1.0, 0.0]);
        assert_eq!(s.index_of("b"), Some(1));
    }

    #[test]
    fn row_arity_mismatch_names_line() {
        match parse("2 3\na 1 0 0\nb 0 1 0 5\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_non_finite_rejected() {
        assert!(matches!(
            parse("2 1\na 1\na 2\n"),
            Err(Error::DuplicateWord { line: 3, .. })
        ));
        assert!(matches!(parse("1 1\na NaN\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse("1 1\na inf\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn row_count_must_match_header() {
        assert!(matches!(parse("3 1\na 1\nb 2\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("1 1\na 1\nb 2\n"), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn tolerates_trailing_space_and_crlf() {
        let s = parse("1 2\r\nw 0.5 1.5 \r\n").unwrap();
        assert_eq!(s.row(0), &[0.5, 1.5]);
    }

    #[test]
    fn limit_takes_prefix() {
        let s = read_embeddings("3 1\na 1\nb 2\nc 3\n".as_bytes(), Some(2)).unwrap();
        assert_eq!(s.words(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn writes_exact_format() {
        let s = EmbeddingSpace::new(vec!["x".into()], vec![0.5, -0.25], 2).unwrap();
        let mut buf = Vec::new();
        write_embeddings(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1 2\nx 0.5 -0.25\n");

        let empty = EmbeddingSpace::new(vec![], vec![], 4).unwrap();
        let mut buf = Vec::new();
        write_embeddings(&empty, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 4\n");
        assert_eq!(parse("0 4\n").unwrap().len(), 0);
    }

    #[test]
    fn unicode_tokens() {
        let s = parse("2 1\naño 1\n日本 2\n").unwrap();
        assert_eq!(s.index_of("日本"), Some(1));
    }

    #[test]
    fn counts_must_be_non_increasing() {
        let s = EmbeddingSpace::new(vec!["a".into(), "b".into()], vec![1.0, 2.0], 1).unwrap();
        assert!(s.clone().with_counts(vec![3, 3]).is_ok());
        assert!(s.with_counts(vec![1, 3]).is_err());
    }

    #[test]
    fn view_and_matrix_agree() {
        let s = parse("2 3\na 1 2 3\nb 4 5 6").unwrap();
        let v = s.view();
        assert_eq!(v[(2, 1)], 6.0);
        let m = s.to_matrix();
        assert_eq!(m[(1, 2)], 6.0);
        assert_eq!(s.with_matrix(&m).unwrap(), s);
    }
}
