//! Tools for measuring how close two word vector spaces are to isomorphic,
//! aligning them with orthogonal maps, and simulating low-resource training
//! conditions (small corpora, early training snapshots, topic-matched
//! samples).

pub mod align;
pub mod bli;
pub mod corpus;
pub mod dictionary;
pub mod embeddings;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod isometry;
pub mod preprocess;
pub mod sgns;
pub mod similarity;
pub mod synth;

pub use dictionary::{BilingualDictionary, Entry};
pub use embeddings::{load_embeddings, save_embeddings, EmbeddingSpace};
pub use error::{Error, Result};
pub use preprocess::PreprocessChain;
