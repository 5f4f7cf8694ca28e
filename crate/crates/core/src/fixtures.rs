//! Published reference numbers from full-scale Wikipedia training, kept as
//! read-only data. None of them is reproducible at desk scale.

use crate::error::{Error, Result};
use crate::experiment::{read_records, Record};

/// Raw CSV of per-condition MRR scores in experiment-record form.
pub const TOPIC_SKEW_MRR: &str = include_str!("../fixtures/topic_skew_mrr.csv");
/// Raw CSV of the published gaps: `pair_a,pair_b,condition,gap`.
pub const TOPIC_SKEW_GAPS: &str = include_str!("../fixtures/topic_skew_gaps.csv");
pub const WIKI_SIZES: &str = include_str!("../fixtures/wiki_sizes.csv");
pub const FULL_TRAINING: &str = include_str!("../fixtures/full_training.csv");

#[derive(Clone, Debug, PartialEq)]
pub struct WikiSize {
    pub sentences: u64,
    pub tokens: u64,
    pub comparable: Vec<String>,
}

/// Spanish Wikipedia sample sizes with the low-resource Wikipedias of
/// comparable size.
pub fn wiki_sizes() -> Vec<WikiSize> {
    let mut reader = csv::Reader::from_reader(WIKI_SIZES.as_bytes());
    reader
        .records()
        .map(|r| {
            let r = r.expect("fixture is valid CSV");
            WikiSize {
                sentences: r[0].parse().expect("fixture integer"),
                tokens: r[1].parse().expect("fixture integer"),
                comparable: r[2].split(';').map(str::to_string).collect(),
            }
        })
        .collect()
}

pub fn topic_skew_records() -> Vec<Record> {
    read_records(TOPIC_SKEW_MRR.as_bytes()).expect("fixture is valid")
}

#[derive(Clone, Debug, PartialEq)]
pub struct PublishedGap {
    pub pair_a: String,
    pub pair_b: String,
    pub condition: String,
    pub gap: f64,
}

pub fn topic_skew_gaps() -> Vec<PublishedGap> {
    let mut reader = csv::Reader::from_reader(TOPIC_SKEW_GAPS.as_bytes());
    reader
        .records()
        .map(|r| {
            let r = r.expect("fixture is valid CSV");
            PublishedGap {
                pair_a: r[0].to_string(),
                pair_b: r[1].to_string(),
                condition: r[2].to_string(),
                gap: r[3].parse().expect("fixture number"),
            }
        })
        .collect()
}

/// Scores between fully trained English and Spanish spaces, by measure and
/// test set. Absent cells are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct FullTrainingTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl FullTrainingTable {
    pub fn get(&self, measure: &str, column: &str) -> Result<Option<f64>> {
        let c = self
            .columns
            .iter()
            .position(|x| x == column)
            .ok_or_else(|| Error::param(format!("no column {column}")))?;
        let row = self
            .rows
            .iter()
            .find(|r| r.0 == measure)
            .ok_or_else(|| Error::param(format!("no measure {measure}")))?;
        Ok(row.1[c])
    }
}

pub fn full_training() -> FullTrainingTable {
    let mut reader = csv::Reader::from_reader(FULL_TRAINING.as_bytes());
    let columns = reader.headers().expect("fixture header").iter().skip(1).map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| {
            let r = r.expect("fixture is valid CSV");
            let values = r.iter().skip(1).map(|v| (!v.is_empty()).then(|| v.parse().expect("fixture number"))).collect();
            (r[0].to_string(), values)
        })
        .collect();
    FullTrainingTable { columns, rows }
}
