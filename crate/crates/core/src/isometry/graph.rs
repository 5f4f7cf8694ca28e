//! Nearest-neighbour graphs, Laplacian spectra and eigenvector similarity.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::preprocess::l2_normalize;
use crate::similarity::{for_each_cosine_block, top_k_indices};

/// Share of the Laplacian energy the leading eigenvalues must reach.
pub const ENERGY_SHARE: f64 = 0.9;

/// Undirected, unweighted graph without self-loops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NNGraph {
    /// Neighbour lists, sorted ascending.
    adjacency: Vec<Vec<usize>>,
    pub k: usize,
}

impl NNGraph {
    /// Builds a graph from an edge list; duplicates and orientation are
    /// normalised away.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::param(format!("edge ({a}, {b}) outside 0..{n}")));
            }
            if a == b {
                return Err(Error::param(format!("self-loop at node {a}")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        let k = adjacency.iter().map(Vec::len).min().unwrap_or(0);
        Ok(NNGraph { adjacency, k })
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
            .collect()
    }

    /// Unnormalised Laplacian `D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut l = DMatrix::zeros(n, n);
        for (a, list) in self.adjacency.iter().enumerate() {
            l[(a, a)] = list.len() as f64;
            for &b in list {
                l[(a, b)] = -1.0;
            }
        }
        l
    }
}

/// k-NN graph over the `n_top` most frequent words, cosine similarity,
/// symmetrised by union. Ties go to the lower word rank.
pub fn knn_graph(space: &EmbeddingSpace, n_top: usize, k: usize) -> Result<NNGraph> {
    if k == 0 {
        return Err(Error::param("k must be positive"));
    }
    if n_top > space.len() {
        return Err(Error::param(format!(
            "n_top = {n_top} exceeds vocabulary size {}",
            space.len()
        )));
    }
    if k >= n_top {
        return Err(Error::param(format!("k = {k} must be smaller than n_top = {n_top}")));
    }
    let mut edges = Vec::with_capacity(n_top * k);
    for_each_cosine_block(space, n_top, space, n_top, |start, block| {
        for i in 0..block.ncols() {
            let node = start + i;
            let row = block.column(i);
            for j in top_k_indices(row.iter().copied(), k, Some(node)) {
                edges.push((node, j));
            }
        }
    });
    let mut g = NNGraph::from_edges(n_top, &edges)?;
    g.k = k;
    Ok(g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralStats {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub energy: f64,
}

impl SpectralStats {
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let energy = eigenvalues.iter().sum();
        SpectralStats { eigenvalues, energy }
    }

    /// Smallest `k` whose leading eigenvalues carry at least `share` of the
    /// total energy.
    pub fn energy_rank(&self, share: f64) -> usize {
        let goal = share * self.energy;
        let mut acc = 0.0;
        for (i, v) in self.eigenvalues.iter().enumerate() {
            acc += v;
            if acc >= goal {
                return i + 1;
            }
        }
        self.eigenvalues.len()
    }
}

/// Eigenvalues of `L = D - A`. The spectrum of an unweighted Laplacian
/// consists of algebraic integers, so values within `1e-10` (relative to the
/// largest) of an integer are snapped to it; this strips solver round-off
/// from integral eigenvalues such as the zero of every component.
pub fn laplacian_spectrum(graph: &NNGraph) -> Result<SpectralStats> {
    if graph.n() == 0 {
        return Err(Error::param("graph is empty"));
    }
    let eig = SymmetricEigen::try_new(graph.laplacian(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let snapped = eig
        .eigenvalues
        .iter()
        .map(|&v| {
            let r = v.round();
            if (v - r).abs() <= SNAP_TOL * scale {
                r
            } else {
                v
            }
        })
        .collect();
    Ok(SpectralStats::from_eigenvalues(snapped))
}

const SNAP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvsResult {
    pub delta: f64,
    pub k1: usize,
    pub k2: usize,
    pub k: usize,
}

/// Sum of squared differences of the `min(k1, k2)` leading eigenvalues.
pub fn evs_from_spectra(a: &SpectralStats, b: &SpectralStats) -> EvsResult {
    let k1 = a.energy_rank(ENERGY_SHARE);
    let k2 = b.energy_rank(ENERGY_SHARE);
    let k = k1.min(k2);
    let delta = a
        .eigenvalues
        .iter()
        .zip(&b.eigenvalues)
        .take(k)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    EvsResult { delta, k1, k2, k }
}

pub fn evs_from_graphs(a: &NNGraph, b: &NNGraph) -> Result<EvsResult> {
    Ok(evs_from_spectra(&laplacian_spectrum(a)?, &laplacian_spectrum(b)?))
}

/// Eigenvector similarity between two spaces; lower means more isomorphic.
pub fn evs(source: &EmbeddingSpace, target: &EmbeddingSpace, n_top: usize, k: usize) -> Result<EvsResult> {
    if source.len() < n_top || target.len() < n_top {
        return Err(Error::param(format!("both spaces need at least {n_top} words")));
    }
    let gs = knn_graph(&l2_normalize(&source.top(n_top))?, n_top, k)?;
    let gt = knn_graph(&l2_normalize(&target.top(n_top))?, n_top, k)?;
    evs_from_graphs(&gs, &gt)
}
