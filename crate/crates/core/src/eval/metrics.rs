use serde::{Deserialize, Serialize};

use crate::channel_model::MeasurementMatrix;
use crate::error::{Error, Result};
use crate::grid_builder::GridModel;
use crate::synth::MrSample;
use crate::units::linear_to_dbm_floored;

/// Grid of the nearest training sample for every test location; ties to the lowest grid.
pub fn assign_test_grids(
    test_locations: &[(f64, f64)],
    train_locations: &[(f64, f64)],
    train_assignment: &[usize],
    k: usize,
) -> Result<Vec<usize>> {
    if train_locations.is_empty() || k == 0 {
        return Err(Error::invalid("model has no training samples"));
    }
    if train_locations.len() != train_assignment.len() {
        return Err(Error::dims("training locations and assignment differ in length"));
    }
    if let Some(&g) = train_assignment.iter().find(|&&g| g >= k) {
        return Err(Error::invalid(format!("assignment references grid {g} >= k = {k}")));
    }
    let mut nearest = vec![f64::INFINITY; k];
    Ok(test_locations
        .iter()
        .map(|p| {
            nearest.iter_mut().for_each(|d| *d = f64::INFINITY);
            for (q, &g) in train_locations.iter().zip(train_assignment) {
                let d = (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
                if d < nearest[g] {
                    nearest[g] = d;
                }
            }
            let mut best = 0;
            for g in 1..k {
                if nearest[g] < nearest[best] {
                    best = g;
                }
            }
            best
        })
        .collect())
}

/// Overall dB MAE with its per-grid breakdown. Grids without samples are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeSummary {
    pub mae_db: f64,
    pub per_grid: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

/// Mean absolute dB error between each sample and its grid's prediction.
///
/// Each sample contributes the mean over its valid beams; each grid the mean over
/// its samples; the result is the mean over grids that hold at least one sample.
pub fn masked_mae_db(predictions_mw: &[Vec<f64>], samples: &[MrSample], assignment: &[usize]) -> Result<MaeSummary> {
    if samples.len() != assignment.len() {
        return Err(Error::dims(format!("{} samples but {} assignments", samples.len(), assignment.len())));
    }
    let k = predictions_mw.len();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (s, &g) in samples.iter().zip(assignment) {
        let pred = predictions_mw
            .get(g)
            .ok_or_else(|| Error::invalid(format!("assignment references grid {g} >= k = {k}")))?;
        if pred.len() != s.m() {
            return Err(Error::dims(format!("prediction has {} beams, sample has {}", pred.len(), s.m())));
        }
        let (mut err, mut valid) = (0.0, 0usize);
        for b in 0..s.m() {
            if s.serving_mask[b] {
                err += (linear_to_dbm_floored(pred[b]) - s.serving_rsrp[b]).abs();
                valid += 1;
            }
        }
        if valid > 0 {
            sums[g] += err / valid as f64;
            counts[g] += 1;
        }
    }
    let per_grid: Vec<Option<f64>> =
        sums.iter().zip(&counts).map(|(&s, &c)| (c > 0).then(|| s / c as f64)).collect();
    let populated: Vec<f64> = per_grid.iter().flatten().copied().collect();
    let empty = k - populated.len();
    if empty > 0 {
        log::debug!("{empty} of {k} grids hold no samples and are left out of the MAE");
    }
    if populated.is_empty() {
        return Err(Error::invalid("no grid holds a sample with a valid beam"));
    }
    Ok(MaeSummary { mae_db: populated.iter().sum::<f64>() / populated.len() as f64, per_grid, counts })
}

fn grid_predictions(model: &GridModel, a: &MeasurementMatrix) -> Result<Vec<Vec<f64>>> {
    (0..model.k).map(|k| model.predicted(k, a)).collect()
}

/// Train MAE of a fitted model on its own training samples.
pub fn train_mae(model: &GridModel, train: &[MrSample], a: &MeasurementMatrix) -> Result<MaeSummary> {
    masked_mae_db(&grid_predictions(model, a)?, train, &model.assignment)
}

/// Test MAE under the adjusted matrix with a precomputed test assignment.
pub fn test_mae(model: &GridModel, test: &[MrSample], test_assignment: &[usize], a_prime: &MeasurementMatrix) -> Result<MaeSummary> {
    masked_mae_db(&grid_predictions(model, a_prime)?, test, test_assignment)
}
