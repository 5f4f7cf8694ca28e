//! Bilingual dictionaries: ordered (source, target) pairs with optional
//! frequency-bin labels, stored as MUSE-style TSV.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub source: String,
    pub target: String,
    pub bin: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BilingualDictionary {
    pub name: String,
    /// `1k`, `5k`, `test`, ... when known.
    pub size_class: Option<String>,
    entries: Vec<Entry>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverageReport {
    pub total: usize,
    pub usable: usize,
    pub missing_source: usize,
    pub missing_target: usize,
}

impl CoverageReport {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.usable as f64 / self.total as f64
        }
    }
}

impl BilingualDictionary {
    /// Builds a dictionary, dropping repeated (source, target) pairs.
    pub fn new(name: impl Into<String>, entries: impl IntoIterator<Item = Entry>) -> Self {
        let mut seen = HashSet::new();
        let entries = entries
            .into_iter()
            .filter(|e| seen.insert((e.source.clone(), e.target.clone())))
            .collect();
        BilingualDictionary {
            name: name.into(),
            size_class: None,
            entries,
        }
    }

    pub fn from_pairs<S: Into<String>, T: Into<String>>(
        name: impl Into<String>,
        pairs: impl IntoIterator<Item = (S, T)>,
    ) -> Self {
        Self::new(
            name,
            pairs.into_iter().map(|(s, t)| Entry {
                source: s.into(),
                target: t.into(),
                bin: None,
            }),
        )
    }

    /// Every word of `space` paired with itself.
    pub fn identity(space: &EmbeddingSpace) -> Self {
        Self::from_pairs("identity", space.words().iter().map(|w| (w.clone(), w.clone())))
    }

    pub fn with_size_class(mut self, class: impl Into<String>) -> Self {
        self.size_class = Some(class.into());
        self
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|e| (e.source.as_str(), e.target.as_str()))
    }

    pub fn has_bins(&self) -> bool {
        self.entries.iter().any(|e| e.bin.is_some())
    }

    pub fn source_words(&self) -> HashSet<&str> {
        self.entries.iter().map(|e| e.source.as_str()).collect()
    }

    pub fn inverted(&self) -> Self {
        BilingualDictionary {
            name: format!("{}-inv", self.name),
            size_class: self.size_class.clone(),
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    source: e.target.clone(),
                    target: e.source.clone(),
                    bin: e.bin.clone(),
                })
                .collect(),
        }
    }

    /// Row indices of the pairs whose words both exist.
    pub fn usable_pairs(&self, source: &EmbeddingSpace, target: &EmbeddingSpace) -> Vec<(usize, usize)> {
        self.entries
            .iter()
            .filter_map(|e| Some((source.index_of(&e.source)?, target.index_of(&e.target)?)))
            .collect()
    }

    pub fn coverage(&self, source: &EmbeddingSpace, target: &EmbeddingSpace) -> CoverageReport {
        let mut report = CoverageReport {
            total: self.len(),
            usable: 0,
            missing_source: 0,
            missing_target: 0,
        };
        for e in &self.entries {
            let s = source.contains(&e.source);
            let t = target.contains(&e.target);
            report.usable += (s && t) as usize;
            report.missing_source += (!s) as usize;
            report.missing_target += (!t) as usize;
        }
        report
    }

    /// Usable pairs whose source and target each occur in exactly one usable
    /// pair, in dictionary order.
    pub fn one_to_one(&self, source: &EmbeddingSpace, target: &EmbeddingSpace) -> Vec<(usize, usize)> {
        let usable = self.usable_pairs(source, target);
        let mut s_count: HashMap<usize, usize> = HashMap::new();
        let mut t_count: HashMap<usize, usize> = HashMap::new();
        for &(s, t) in &usable {
            *s_count.entry(s).or_default() += 1;
            *t_count.entry(t).or_default() += 1;
        }
        usable
            .into_iter()
            .filter(|(s, t)| s_count[s] == 1 && t_count[t] == 1)
            .collect()
    }
}

/// Reads `source<TAB or space>target[<sep>bin]` lines; blank lines are skipped.
pub fn load_dictionary(path: impl AsRef<Path>) -> Result<BilingualDictionary> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_dictionary(BufReader::new(file), name).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_dictionary<R: BufRead>(reader: R, name: impl Into<String>) -> Result<BilingualDictionary> {
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        let mut fields = line.split(['\t', ' ']).filter(|f| !f.is_empty() && *f != "\r");
        let (Some(source), Some(target)) = (fields.next(), fields.next()) else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::Parse {
                line: i + 1,
                msg: "expected `source target [bin]`".into(),
            });
        };
        let bin = fields.next().map(|b| b.trim_end_matches('\r').to_string());
        if fields.next().is_some() {
            return Err(Error::Parse {
                line: i + 1,
                msg: "too many fields".into(),
            });
        }
        entries.push(Entry {
            source: source.to_string(),
            target: target.trim_end_matches('\r').to_string(),
            bin,
        });
    }
    Ok(BilingualDictionary::new(name, entries))
}

pub fn save_dictionary(dict: &BilingualDictionary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for e in dict.entries() {
        let r = match &e.bin {
            Some(b) => writeln!(out, "{}\t{}\t{}", e.source, e.target, b),
            None => writeln!(out, "{}\t{}", e.source, e.target),
        };
        r.map_err(|err| Error::io(path, err))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(words: &[&str]) -> EmbeddingSpace {
        let data = (0..words.len()).map(|i| i as f64 + 1.0).collect();
        EmbeddingSpace::new(words.iter().map(|w| w.to_string()).collect(), data, 1).unwrap()
    }

    #[test]
    fn parses_tabs_spaces_and_bins() {
        let d = read_dictionary("a\tx\nb y HFREQ\n\nc\tz\tLFREQ\r\n".as_bytes(), "t").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.entries()[1].bin.as_deref(), Some("HFREQ"));
        assert_eq!(d.entries()[2].bin.as_deref(), Some("LFREQ"));
        assert!(read_dictionary("lonely\n".as_bytes(), "t").is_err());
    }

    #[test]
    fn duplicates_dropped() {
        let d = BilingualDictionary::from_pairs("d", [("a", "x"), ("a", "x"), ("a", "y")]);
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn coverage_and_one_to_one() {
        let src = space(&["a", "b", "c"]);
        let tgt = space(&["x", "y"]);
        let d = BilingualDictionary::from_pairs(
            "d",
            [("a", "x"), ("b", "y"), ("c", "y"), ("q", "x"), ("a", "zz")],
        );
        let cov = d.coverage(&src, &tgt);
        assert_eq!(cov.total, 5);
        assert_eq!(cov.usable, 3);
        assert_eq!(cov.missing_source, 1);
        assert_eq!(cov.missing_target, 1);
        // y is shared by b and c
        assert_eq!(d.one_to_one(&src, &tgt), vec![(0, 0)]);
    }
}
