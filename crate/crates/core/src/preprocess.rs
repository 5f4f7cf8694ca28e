//! Normalisation chains applied before measuring or mapping spaces.

use std::fmt;
use std::str::FromStr;

use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    None,
    UnitLength,
    MeanCenter,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterativeParams {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for IterativeParams {
    fn default() -> Self {
        IterativeParams { max_iters: 5, tol: 1e-5 }
    }
}

/// An ordered list of steps, or iterative normalisation which supersedes it.
#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessChain {
    pub steps: Vec<Step>,
    pub iterative: Option<IterativeParams>,
}

impl PreprocessChain {
    pub fn unnorm() -> Self {
        PreprocessChain { steps: vec![], iterative: None }
    }

    pub fn l2() -> Self {
        PreprocessChain { steps: vec![Step::UnitLength], iterative: None }
    }

    pub fn l2_mc_l2() -> Self {
        PreprocessChain {
            steps: vec![Step::UnitLength, Step::MeanCenter, Step::UnitLength],
            iterative: None,
        }
    }

    pub fn iternorm(params: IterativeParams) -> Self {
        PreprocessChain { steps: vec![], iterative: Some(params) }
    }
}

impl FromStr for PreprocessChain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unnorm" | "none" | "" => Ok(Self::unnorm()),
            "l2" => Ok(Self::l2()),
            "l2+mc+l2" => Ok(Self::l2_mc_l2()),
            "iternorm" => Ok(Self::iternorm(IterativeParams::default())),
            other => Err(Error::param(format!(
                "unknown preprocessing {other:?} (expected unnorm, l2, l2+mc+l2, iternorm)"
            ))),
        }
    }
}

impl fmt::Display for PreprocessChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.iterative.is_some() {
            return f.write_str("iternorm");
        }
        let parts: Vec<&str> = self
            .steps
            .iter()
            .filter_map(|s| match s {
                Step::None => None,
                Step::UnitLength => Some("l2"),
                Step::MeanCenter => Some("mc"),
            })
            .collect();
        if parts.is_empty() {
            f.write_str("unnorm")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

/// Parses a comma list such as `unnorm,l2+mc+l2`.
pub fn parse_chain_list(s: &str) -> Result<Vec<PreprocessChain>> {
    s.split(',').map(str::parse).collect()
}

fn unit_rows(data: &mut [f64], dim: usize, space: &EmbeddingSpace) -> Result<()> {
    for (i, row) in data.chunks_exact_mut(dim).enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVector(space.word(i).to_string()));
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(())
}

fn column_mean(data: &[f64], dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    let n = data.len() / dim;
    if n == 0 {
        return mean;
    }
    for row in data.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    mean
}

fn center_rows(data: &mut [f64], dim: usize) {
    let mean = column_mean(data, dim);
    for row in data.chunks_exact_mut(dim) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
}

pub fn l2_normalize(space: &EmbeddingSpace) -> Result<EmbeddingSpace> {
    let mut data = space.as_slice().to_vec();
    unit_rows(&mut data, space.dim(), space)?;
    space.with_data(data)
}

pub fn mean_center(space: &EmbeddingSpace) -> Result<EmbeddingSpace> {
    let mut data = space.as_slice().to_vec();
    center_rows(&mut data, space.dim());
    space.with_data(data)
}

/// Euclidean norm of the column-mean vector.
pub fn mean_norm(space: &EmbeddingSpace) -> f64 {
    column_mean(space.as_slice(), space.dim())
        .iter()
        .map(|m| m * m)
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug)]
pub struct IterativeOutcome {
    pub space: EmbeddingSpace,
    pub iterations: usize,
    pub converged: bool,
    pub mean_norm: f64,
}

/// Repeats L2+MC+L2 until the column mean is shorter than `tol` or
/// `max_iters` blocks have run.
pub fn iterative_normalize(
    space: &EmbeddingSpace,
    max_iters: usize,
    tol: f64,
) -> Result<IterativeOutcome> {
    if max_iters == 0 || tol <= 0.0 {
        return Err(Error::param("iterative normalisation needs max_iters > 0 and tol > 0"));
    }
    let dim = space.dim();
    let mut data = space.as_slice().to_vec();
    let mut iterations = 0;
    let mut norm = f64::INFINITY;
    while iterations < max_iters {
        unit_rows(&mut data, dim, space)?;
        center_rows(&mut data, dim);
        unit_rows(&mut data, dim, space)?;
        iterations += 1;
        norm = column_mean(&data, dim).iter().map(|m| m * m).sum::<f64>().sqrt();
        if norm < tol {
            break;
        }
    }
    Ok(IterativeOutcome {
        space: space.with_data(data)?,
        iterations,
        converged: norm < tol,
        mean_norm: norm,
    })
}

pub fn apply_chain(space: &EmbeddingSpace, chain: &PreprocessChain) -> Result<EmbeddingSpace> {
    if let Some(p) = chain.iterative {
        let out = iterative_normalize(space, p.max_iters, p.tol)?;
        if !out.converged {
            log::warn!(
                "iterative normalisation stopped after {} iterations, mean norm {:.3e}",
                out.iterations,
                out.mean_norm
            );
        }
        return Ok(out.space);
    }
    let mut current = space.clone();
    for step in &chain.steps {
        current = match step {
            Step::None => current,
            Step::UnitLength => l2_normalize(&current)?,
            Step::MeanCenter => mean_center(&current)?,
        };
    }
    Ok(current)
}
