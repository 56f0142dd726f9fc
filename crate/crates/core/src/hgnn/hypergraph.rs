use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::MrSample;

/// Which family a hyperedge belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    Beam,
    Time,
}

/// Vertex/hyperedge incidence with the beam-space and temporal families kept apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypergraphIncidence {
    n_vertices: usize,
    edges_beam: Vec<Vec<usize>>,
    edges_time: Vec<Vec<usize>>,
    /// Number of incident hyperedges per vertex, both families counted.
    degree: Vec<usize>,
}

impl HypergraphIncidence {
    pub fn new(n_vertices: usize, edges_beam: Vec<Vec<usize>>, edges_time: Vec<Vec<usize>>) -> Result<Self> {
        let mut degree = vec![0usize; n_vertices];
        for e in edges_beam.iter().chain(&edges_time) {
            if e.is_empty() {
                return Err(Error::invalid("hyperedges must be non-empty"));
            }
            for &v in e {
                if v >= n_vertices {
                    return Err(Error::invalid(format!("vertex {v} out of range for {n_vertices} vertices")));
                }
                degree[v] += 1;
            }
        }
        if let Some(v) = degree.iter().position(|&d| d == 0) {
            return Err(Error::invalid(format!("vertex {v} has no incident hyperedge")));
        }
        Ok(HypergraphIncidence { n_vertices, edges_beam, edges_time, degree })
    }

    /// Beam-space kNN edges plus temporal same-call edges of `samples`.
    pub fn from_samples(samples: &[MrSample], k: usize, gamma: f64, tau: f64) -> Result<Self> {
        let beam = build_beam_hyperedges(samples, k, gamma)?;
        let time = build_temporal_hyperedges(samples, tau)?;
        HypergraphIncidence::new(samples.len(), beam, time)
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges_beam(&self) -> &[Vec<usize>] {
        &self.edges_beam
    }

    pub fn edges_time(&self) -> &[Vec<usize>] {
        &self.edges_time
    }

    pub fn degree(&self, v: usize) -> usize {
        self.degree[v]
    }

    /// All hyperedges with their family, beam edges first.
    pub fn edges(&self) -> impl Iterator<Item = (EdgeKind, &[usize])> {
        self.edges_beam
            .iter()
            .map(|e| (EdgeKind::Beam, e.as_slice()))
            .chain(self.edges_time.iter().map(|e| (EdgeKind::Time, e.as_slice())))
    }

    /// Dense `n_vertices x n_edges` incidence matrix `[H1, H2]`.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let n_e = self.edges_beam.len() + self.edges_time.len();
        let mut h = DMatrix::zeros(self.n_vertices, n_e);
        for (j, (_, e)) in self.edges().enumerate() {
            for &v in e {
                h[(v, j)] = 1.0;
            }
        }
        h
    }
}

/// `gamma * ||r_i - r_j|| + (1 - gamma) * (1 - cos(r_i, r_j))`.
pub fn beam_space_distance(r_i: &[f64], r_j: &[f64], gamma: f64) -> Result<f64> {
    if r_i.len() != r_j.len() {
        return Err(Error::dims("beam vectors must have equal length"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid("gamma must lie in [0, 1]"));
    }
    let (mut diff, mut dot, mut ni, mut nj) = (0.0, 0.0, 0.0, 0.0);
    for (a, b) in r_i.iter().zip(r_j) {
        diff += (a - b) * (a - b);
        dot += a * b;
        ni += a * a;
        nj += b * b;
    }
    let euclid = diff.sqrt();
    if gamma == 1.0 {
        return Ok(euclid);
    }
    if ni == 0.0 || nj == 0.0 {
        return Err(Error::invalid("cosine distance is undefined for a zero vector"));
    }
    let cos = (dot / (ni.sqrt() * nj.sqrt())).clamp(-1.0, 1.0);
    let cos_term = if r_i == r_j { 0.0 } else { 1.0 - cos };
    Ok(gamma * euclid + (1.0 - gamma) * cos_term)
}

/// Indices of the `k` rows of `pool` closest to `query` (ties by index), skipping `exclude`.
pub(crate) fn nearest_k(
    query: &[f64],
    pool: &[Vec<f64>],
    k: usize,
    gamma: f64,
    exclude: Option<usize>,
) -> Result<Vec<usize>> {
    let mut d: Vec<(f64, usize)> = Vec::with_capacity(pool.len());
    for (j, r) in pool.iter().enumerate() {
        if Some(j) != exclude {
            d.push((beam_space_distance(query, r, gamma)?, j));
        }
    }
    let k = k.min(d.len());
    let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < d.len() {
        d.select_nth_unstable_by(k, by);
        d.truncate(k);
    }
    d.sort_unstable_by(by);
    Ok(d.into_iter().map(|(_, j)| j).collect())
}

/// One hyperedge per vertex: the vertex followed by its `k` nearest neighbors in beam space.
pub fn build_beam_hyperedges(samples: &[MrSample], k: usize, gamma: f64) -> Result<Vec<Vec<usize>>> {
    let vectors: Vec<Vec<f64>> = samples.iter().map(MrSample::stacked_dbm).collect();
    beam_hyperedges_from_vectors(&vectors, k, gamma)
}

pub fn beam_hyperedges_from_vectors(vectors: &[Vec<f64>], k: usize, gamma: f64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k >= vectors.len() {
        return Err(Error::invalid(format!("k = {k} must satisfy 1 <= k < n_vertices = {}", vectors.len())));
    }
    (0..vectors.len())
        .map(|v| {
            let mut edge = Vec::with_capacity(k + 1);
            edge.push(v);
            edge.extend(nearest_k(&vectors[v], vectors, k, gamma, Some(v))?);
            Ok(edge)
        })
        .collect()
}

/// One hyperedge per vertex: every report of the same call within `tau` seconds, sorted.
pub fn build_temporal_hyperedges(samples: &[MrSample], tau: f64) -> Result<Vec<Vec<usize>>> {
    let calls: Vec<(u64, f64)> = samples.iter().map(|s| (s.call_id, s.timestamp)).collect();
    temporal_hyperedges_from_calls(&calls, tau)
}

pub fn temporal_hyperedges_from_calls(calls: &[(u64, f64)], tau: f64) -> Result<Vec<Vec<usize>>> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau must be positive"));
    }
    let mut by_call: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &(call, _)) in calls.iter().enumerate() {
        by_call.entry(call).or_default().push(i);
    }
    Ok((0..calls.len())
        .map(|v| {
            let (call, t) = calls[v];
            by_call[&call].iter().copied().filter(|&u| (calls[u].1 - t).abs() <= tau).collect()
        })
        .collect())
}
