//! Exact Hausdorff distance between finite point sets by full pairwise scan.

use crate::error::{Error, Result};
use crate::similarity::cosine;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    /// `1 - cos`
    Cosine,
    Chebyshev,
}

impl Metric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::Cosine => 1.0 - cosine(a, b),
            Metric::Chebyshev => a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
        }
    }
}

fn directed(from: &[Vec<f64>], to: &[Vec<f64>], metric: Metric) -> f64 {
    from.iter()
        .map(|p| to.iter().map(|q| metric.distance(p, q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>], metric: Metric) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("Hausdorff distance of an empty set"));
    }
    let dim = a[0].len();
    if a.iter().chain(b).any(|p| p.len() != dim) {
        return Err(Error::param("points differ in dimension"));
    }
    Ok(directed(a, b, metric).max(directed(b, a, metric)))
}
