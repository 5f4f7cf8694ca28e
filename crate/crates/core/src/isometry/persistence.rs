//! 0-dimensional Vietoris-Rips persistence and the bottleneck distance.
//!
//! The Gromov-Hausdorff estimate between two spaces is the bottleneck
//! distance between their 0-dimensional diagrams. Every finite 0-dim class is
//! born at 0 and dies at a minimum-spanning-tree edge weight; the essential
//! class is closed off at the largest MST weight so that diagrams stay finite.

use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::preprocess::{l2_normalize, mean_center};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PersistencePoint {
    pub birth: f64,
    pub death: f64,
}

impl PersistencePoint {
    pub fn new(birth: f64, death: f64) -> Self {
        debug_assert!(birth <= death);
        PersistencePoint { birth, death }
    }

    /// L-infinity distance to the diagonal.
    pub fn diagonal_cost(&self) -> f64 {
        (self.death - self.birth) / 2.0
    }

    pub fn cost(&self, other: &PersistencePoint) -> f64 {
        (self.birth - other.birth).abs().max((self.death - other.death).abs())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PersistenceDiagram {
    pub points: Vec<PersistencePoint>,
}

impl PersistenceDiagram {
    pub fn new(points: Vec<PersistencePoint>) -> Self {
        PersistenceDiagram { points }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self::new(pairs.iter().map(|&(b, d)| PersistencePoint::new(b, d)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Minimum-spanning-tree edge weights (Prim, dense) of the Euclidean
/// distances between the given rows, in the order edges join the tree.
pub fn mst_weights(rows: &[&[f64]]) -> Vec<f64> {
    let n = rows.len();
    if n < 2 {
        return Vec::new();
    }
    let dist = |a: usize, b: usize| -> f64 {
        rows[a]
            .iter()
            .zip(rows[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut weights = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let d = dist(current, v);
            if d < best[v] {
                best[v] = d;
            }
            if best[v] < next_w || next == usize::MAX {
                next_w = best[v];
                next = v;
            }
        }
        in_tree[next] = true;
        weights.push(next_w);
        current = next;
    }
    weights
}

/// 0-dim Rips diagram of the `n_top` most frequent rows: `(0, w)` for each MST
/// weight plus the essential class at `(0, max w)`. Points sorted by death.
pub fn rips_diagram0(space: &EmbeddingSpace, n_top: usize) -> Result<PersistenceDiagram> {
    if n_top < 2 {
        return Err(Error::param("a Rips diagram needs at least 2 points"));
    }
    if n_top > space.len() {
        return Err(Error::param(format!(
            "n_top = {n_top} exceeds vocabulary size {}",
            space.len()
        )));
    }
    let rows: Vec<&[f64]> = (0..n_top).map(|i| space.row(i)).collect();
    let mut weights = mst_weights(&rows);
    weights.sort_by(f64::total_cmp);
    let w_max = *weights.last().expect("n_top >= 2");
    weights.push(w_max);
    Ok(PersistenceDiagram::new(
        weights.into_iter().map(|w| PersistencePoint::new(0.0, w)).collect(),
    ))
}

/// Bottleneck distance: binary search over the finite set of candidate costs,
/// each step deciding whether a matching of cost at most `eps` exists.
pub fn bottleneck(a: &PersistenceDiagram, b: &PersistenceDiagram) -> f64 {
    let mut candidates: Vec<f64> = Vec::with_capacity(a.len() * b.len() + a.len() + b.len() + 1);
    candidates.push(0.0);
    candidates.extend(a.points.iter().map(PersistencePoint::diagonal_cost));
    candidates.extend(b.points.iter().map(PersistencePoint::diagonal_cost));
    for p in &a.points {
        candidates.extend(b.points.iter().map(|q| p.cost(q)));
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // all points to the diagonal always works at the largest candidate
    let (mut lo, mut hi) = (0, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if matching_exists(a, b, candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo]
}

/// A matching of cost `<= eps` exists iff the points of `a` too far from the
/// diagonal can all be matched into `b`, and vice versa: by the
/// Mendelsohn-Dulmage theorem the two one-sided matchings combine, and every
/// remaining point projects onto its own diagonal copy.
fn matching_exists(a: &PersistenceDiagram, b: &PersistenceDiagram, eps: f64) -> bool {
    saturates(a, b, eps) && saturates(b, a, eps)
}

fn saturates(from: &PersistenceDiagram, to: &PersistenceDiagram, eps: f64) -> bool {
    let must: Vec<&PersistencePoint> = from.points.iter().filter(|p| p.diagonal_cost() > eps).collect();
    if must.len() > to.len() {
        return false;
    }
    let adj: Vec<Vec<usize>> = must
        .iter()
        .map(|p| {
            to.points
                .iter()
                .enumerate()
                .filter(|(_, q)| p.cost(q) <= eps)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    if adj.iter().any(Vec::is_empty) {
        return false;
    }
    hopcroft_karp(&adj, to.len()) == must.len()
}

/// Maximum bipartite matching size; `adj[u]` lists right vertices of left `u`.
pub(crate) fn hopcroft_karp(adj: &[Vec<usize>], n_right: usize) -> usize {
    const NIL: usize = usize::MAX;
    let n_left = adj.len();
    let mut match_l = vec![NIL; n_left];
    let mut match_r = vec![NIL; n_right];
    let mut dist = vec![0usize; n_left];
    let mut size = 0;

    // greedy warm start
    for u in 0..n_left {
        if let Some(&v) = adj[u].iter().find(|&&v| match_r[v] == NIL) {
            match_l[u] = v;
            match_r[v] = u;
            size += 1;
        }
    }

    loop {
        // BFS layering from free left vertices
        let mut queue = Vec::with_capacity(n_left);
        for u in 0..n_left {
            if match_l[u] == NIL {
                dist[u] = 0;
                queue.push(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        let mut found = false;
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            for &v in &adj[u] {
                let w = match_r[v];
                if w == NIL {
                    found = true;
                } else if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push(w);
                }
            }
        }
        if !found {
            return size;
        }
        let mut next_edge = vec![0usize; n_left];
        for u in 0..n_left {
            if match_l[u] == NIL && augment(u, adj, &mut match_l, &mut match_r, &mut dist, &mut next_edge) {
                size += 1;
            }
        }
    }
}

fn augment(
    root: usize,
    adj: &[Vec<usize>],
    match_l: &mut [usize],
    match_r: &mut [usize],
    dist: &mut [usize],
    next_edge: &mut [usize],
) -> bool {
    const NIL: usize = usize::MAX;
    // iterative DFS along the BFS layers
    let mut stack = vec![root];
    while let Some(&u) = stack.last() {
        if next_edge[u] == adj[u].len() {
            dist[u] = usize::MAX;
            stack.pop();
            continue;
        }
        let v = adj[u][next_edge[u]];
        next_edge[u] += 1;
        let w = match_r[v];
        if w == NIL {
            // flip the path root .. u, v
            let mut v = v;
            for &x in stack.iter().rev() {
                let prev = match_l[x];
                match_l[x] = v;
                match_r[v] = x;
                v = prev;
            }
            return true;
        }
        if dist[w] == dist[u] + 1 {
            stack.push(w);
        }
    }
    false
}

/// Gromov-Hausdorff estimate: bottleneck distance between the 0-dim Rips
/// diagrams of the unit-length, mean-centred top `n_top` words.
pub fn gh(source: &EmbeddingSpace, target: &EmbeddingSpace, n_top: usize) -> Result<f64> {
    if source.len() < n_top || target.len() < n_top {
        return Err(Error::param(format!("both spaces need at least {n_top} words")));
    }
    let prep = |s: &EmbeddingSpace| -> Result<EmbeddingSpace> { mean_center(&l2_normalize(&s.top(n_top))?) };
    let ds = rips_diagram0(&prep(source)?, n_top)?;
    let dt = rips_diagram0(&prep(target)?, n_top)?;
    Ok(bottleneck(&ds, &dt))
}
