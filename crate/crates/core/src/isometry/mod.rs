//! Isomorphism measures between two vector spaces: eigenvector similarity,
//! a Gromov-Hausdorff estimate, and relational similarity.

mod graph;
mod hausdorff;
mod persistence;
mod relational;

pub use graph::{
    evs, evs_from_graphs, evs_from_spectra, knn_graph, laplacian_spectrum, EvsResult, NNGraph, SpectralStats,
    ENERGY_SHARE,
};
pub use hausdorff::{hausdorff, Metric};
pub use persistence::{bottleneck, gh, mst_weights, rips_diagram0, PersistenceDiagram, PersistencePoint};
pub use relational::{pearson, rsim, rsim_sample, similarity_lists, RsimParams, DEFAULT_PAIRS, DEFAULT_SEED};

pub const DEFAULT_TOP_N: usize = 1000;
pub const DEFAULT_KNN: usize = 10;

/// The three scores for one pair of spaces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsoScores {
    /// Lower is more isomorphic.
    pub evs: f64,
    /// Lower is more isomorphic.
    pub gh: f64,
    /// Higher is more isomorphic.
    pub rsim: f64,
}
