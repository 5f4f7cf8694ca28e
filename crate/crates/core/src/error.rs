use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate word {word:?} at line {line}")]
    DuplicateWord { word: String, line: usize },

    #[error("cannot length-normalise zero vector of word {0:?}")]
    ZeroVector(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("insufficient coverage: {0}")]
    Coverage(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("word {0:?} is out of vocabulary")]
    OutOfVocabulary(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("snapshot budgets unreachable within {available} tokens: {budgets:?}")]
    UnreachableBudget { budgets: Vec<u64>, available: u64 },

    #[error("training diverged at token {position}")]
    Divergence { position: u64 },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
