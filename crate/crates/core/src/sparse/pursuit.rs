use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::nnls::constrained_nnls;
use super::{geometric_weights, GeometryPrior};
use crate::channel_model::{AngularGrid, MeasurementMatrix};
use crate::error::{Error, Result};

/// Sparse nonnegative APS estimate of one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApsEstimate {
    /// Length N_A, nonnegative.
    pub x: Vec<f64>,
    /// Sorted indices of the nonzero entries of `x`.
    pub support: Vec<usize>,
    /// `||(y - A x)_Omega||_2` in linear power.
    pub residual_norm: f64,
    /// Columns picked by the selection step, in order (including ones later dropped).
    pub selection_order: Vec<usize>,
    /// Observed-row residual norm after every outer iteration.
    pub residual_trace: Vec<f64>,
}

impl ApsEstimate {
    /// All-zero estimate for `n_a` angles.
    pub fn zero(n_a: usize, residual_norm: f64) -> Self {
        ApsEstimate {
            x: vec![0.0; n_a],
            support: Vec::new(),
            residual_norm,
            selection_order: Vec::new(),
            residual_trace: Vec::new(),
        }
    }

    /// Nonzero entries as (angle index, power) pairs.
    pub fn entries(&self) -> Vec<(usize, f64)> {
        self.support.iter().map(|&i| (i, self.x[i])).collect()
    }

    pub fn from_entries(n_a: usize, entries: &[(usize, f64)]) -> Result<Self> {
        let mut x = vec![0.0; n_a];
        for &(i, v) in entries {
            if i >= n_a {
                return Err(Error::invalid(format!("angle index {i} out of range for {n_a} angles")));
            }
            if !(v >= 0.0) {
                return Err(Error::invalid(format!("APS power must be nonnegative, got {v}")));
            }
            x[i] = v;
        }
        let support = (0..n_a).filter(|&i| x[i] > 0.0).collect();
        Ok(ApsEstimate { x, support, residual_norm: f64::NAN, selection_order: Vec::new(), residual_trace: Vec::new() })
    }
}

/// Column scoring rule of the pursuit loop.
#[derive(Debug, Clone)]
pub enum SelectionRule {
    /// `w_i * a_hat_i^T r`.
    Weighted(Vec<f64>),
    /// `a_hat_i^T r`.
    Plain,
    /// `a_hat_i^T r / ||A_hat^T r|| + ||a_i|| / sum_j ||a_j||`.
    MagnitudeShare,
}

/// Greedy nonnegative pursuit shared by all three solvers.
///
/// Correlations and residuals only use the observed rows; the refit optionally caps
/// the predicted power of unobserved beams at the weakest observed value.
pub fn pursue(
    y_bar: &[f64],
    mask: &[bool],
    a: &MeasurementMatrix,
    c: usize,
    rule: &SelectionRule,
    cap_missing: bool,
) -> Result<ApsEstimate> {
    let (m, n_a) = (a.m(), a.n_a());
    if y_bar.len() != m || mask.len() != m {
        return Err(Error::dims(format!("y_bar/mask lengths {}/{} do not match M = {m}", y_bar.len(), mask.len())));
    }
    if c == 0 {
        return Err(Error::invalid("path budget C must be >= 1"));
    }
    if let SelectionRule::Weighted(w) = rule {
        if w.len() != n_a {
            return Err(Error::dims("weight vector length must equal N_A"));
        }
    }
    let observed: Vec<usize> = (0..m).filter(|&i| mask[i]).collect();
    let unobserved: Vec<usize> = (0..m).filter(|&i| !mask[i]).collect();
    if observed.is_empty() {
        return Err(Error::invalid("at least one beam must be observed"));
    }
    if observed.iter().any(|&i| !(y_bar[i] >= 0.0) || !y_bar[i].is_finite()) {
        return Err(Error::invalid("observed beam powers must be finite and nonnegative"));
    }
    let norms: Vec<f64> = (0..n_a).map(|j| a.column(j).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if let Some(j) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::invalid(format!("column {j} of A is all zeros")));
    }
    let norm_total: f64 = norms.iter().sum();
    let y_min = observed.iter().map(|&i| y_bar[i]).fold(f64::INFINITY, f64::min);

    let y_obs: Vec<f64> = observed.iter().map(|&i| y_bar[i]).collect();
    let mut residual = vec![0.0; m];
    for &i in &observed {
        residual[i] = y_bar[i];
    }
    let mut x = vec![0.0; n_a];
    let mut support: Vec<usize> = Vec::new();
    let mut selection_order = Vec::new();
    let mut residual_trace = Vec::new();
    let mut rejected: BTreeSet<usize> = BTreeSet::new();
    let mut corr = correlations(a, &norms, &residual);
    let max_iter = 4 * c + 16;

    for _ in 0..max_iter {
        let Some(q) = select(rule, &corr, &norms, norm_total, &support, &rejected) else { break };
        selection_order.push(q);
        let mut trial: Vec<usize> = support.clone();
        trial.push(q);

        let a_obs = DMatrix::from_fn(observed.len(), trial.len(), |r, k| a.get(observed[r], trial[k]));
        let a_miss = if cap_missing {
            DMatrix::from_fn(unobserved.len(), trial.len(), |r, k| a.get(unobserved[r], trial[k]))
        } else {
            DMatrix::zeros(0, trial.len())
        };
        let z = constrained_nnls(&a_obs, &y_obs, &a_miss, y_min)?.z;

        x.iter_mut().for_each(|v| *v = 0.0);
        let mut next = Vec::with_capacity(trial.len());
        for (k, &j) in trial.iter().enumerate() {
            if z[k] > 0.0 {
                x[j] = z[k];
                next.push(j);
            }
        }
        if next.contains(&q) {
            rejected.clear();
        } else {
            rejected.insert(q);
        }
        support = next;

        for &i in &observed {
            let pred: f64 = support.iter().map(|&j| a.get(i, j) * x[j]).sum();
            residual[i] = y_bar[i] - pred;
        }
        residual_trace.push(norm(&residual));
        corr = correlations(a, &norms, &residual);

        if support.len() >= c {
            break;
        }
        let in_support = |j: usize| support.binary_search(&j).is_ok() || support.contains(&j);
        let best_outside = (0..n_a).filter(|&j| !in_support(j)).map(|j| corr[j]).fold(f64::NEG_INFINITY, f64::max);
        // A zero residual correlation cannot improve the refit, so stop there as well.
        if best_outside <= 0.0 {
            break;
        }
    }

    support.sort_unstable();
    Ok(ApsEstimate { residual_norm: norm(&residual), x, support, selection_order, residual_trace })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|r| r * r).sum::<f64>().sqrt()
}

/// `a_hat_j^T r` for every column.
fn correlations(a: &MeasurementMatrix, norms: &[f64], residual: &[f64]) -> Vec<f64> {
    (0..a.n_a())
        .map(|j| a.column(j).iter().zip(residual).map(|(u, v)| u * v).sum::<f64>() / norms[j])
        .collect()
}

fn select(
    rule: &SelectionRule,
    corr: &[f64],
    norms: &[f64],
    norm_total: f64,
    support: &[usize],
    rejected: &BTreeSet<usize>,
) -> Option<usize> {
    let corr_norm = match rule {
        SelectionRule::MagnitudeShare => corr.iter().map(|c| c * c).sum::<f64>().sqrt(),
        _ => 1.0,
    };
    let mut best: Option<(usize, f64)> = None;
    for j in 0..corr.len() {
        if support.contains(&j) || rejected.contains(&j) {
            continue;
        }
        let score = match rule {
            SelectionRule::Weighted(w) => w[j] * corr[j],
            SelectionRule::Plain => corr[j],
            SelectionRule::MagnitudeShare => {
                let share = if corr_norm > 0.0 { corr[j] / corr_norm } else { 0.0 };
                share + norms[j] / norm_total
            }
        };
        // Strict comparison keeps the lowest index on ties.
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((j, score));
        }
    }
    best.map(|(j, _)| j)
}

/// Geometry- and missing-value-aware nonnegative OMP.
pub fn gm_nnomp(
    y_bar: &[f64],
    mask: &[bool],
    a: &MeasurementMatrix,
    grid: &AngularGrid,
    prior: &GeometryPrior,
    c: usize,
) -> Result<ApsEstimate> {
    if grid.n_a() != a.n_a() {
        return Err(Error::dims(format!("angular grid has {} angles but A has {} columns", grid.n_a(), a.n_a())));
    }
    let weights = geometric_weights(prior, grid)?;
    pursue(y_bar, mask, a, c, &SelectionRule::Weighted(weights), true)
}

/// Nonnegative OMP baseline: unweighted selection, plain NNLS on observed beams.
pub fn nnomp(y_bar: &[f64], mask: &[bool], a: &MeasurementMatrix, c: usize) -> Result<ApsEstimate> {
    pursue(y_bar, mask, a, c, &SelectionRule::Plain, false)
}

/// Weighted NNOMP baseline balancing residual correlation against column magnitude.
pub fn wnomp(y_bar: &[f64], mask: &[bool], a: &MeasurementMatrix, c: usize) -> Result<ApsEstimate> {
    pursue(y_bar, mask, a, c, &SelectionRule::MagnitudeShare, false)
}
