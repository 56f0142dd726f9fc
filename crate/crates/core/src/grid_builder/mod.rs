//! Joint grid construction and per-grid APS estimation.
//!
//! Samples are clustered into `K` grids by alternating three steps: fit one
//! sparse APS per grid from its masked mean RSRP, move every sample to the
//! grid minimizing `valid_distance + beta * ||centroid - location||`, then
//! recompute centroids. Three fixed-grid baselines are provided for comparison.
//!
//! Inside the clustering loop, linear powers are expressed in units of
//! `power_ref_dbm` so that RSRP distances and `beta`-weighted meters are
//! commensurate. Public distances such as [`valid_distance`] stay in mW.

mod kmeans;

use serde::{Deserialize, Serialize};

use crate::channel_model::{AngularGrid, MeasurementMatrix};
use crate::error::{Error, Result};
use crate::sparse::{estimate_aps, ApsEstimate, GeometryPrior, Solver, DEFAULT_SIGMA_PHI, DEFAULT_SIGMA_THETA};
use crate::synth::MrSample;
use crate::units::dbm_to_linear;

pub use kmeans::{kmeans, JointMetric};

pub const DEFAULT_POWER_REF_DBM: f64 = -105.0;

/// Per-sample clustering inputs: scaled linear RSRP, validity mask, planar location.
#[derive(Debug, Clone)]
pub struct GridInputs {
    pub y: Vec<Vec<f64>>,
    pub mask: Vec<Vec<bool>>,
    pub locations: Vec<(f64, f64)>,
    pub power_ref_mw: f64,
}

impl GridInputs {
    pub fn new(samples: &[MrSample], locations: &[(f64, f64)], power_ref_dbm: f64) -> Result<Self> {
        if samples.len() != locations.len() {
            return Err(Error::dims(format!("{} samples but {} locations", samples.len(), locations.len())));
        }
        if samples.is_empty() {
            return Err(Error::invalid("no samples"));
        }
        let m = samples[0].m();
        if let Some(s) = samples.iter().find(|s| s.m() != m) {
            return Err(Error::dims(format!("sample {} has {} beams, expected {m}", s.call_id, s.m())));
        }
        if locations.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
            return Err(Error::invalid("locations must be finite"));
        }
        let power_ref_mw = dbm_to_linear(power_ref_dbm);
        Ok(GridInputs {
            y: samples
                .iter()
                .map(|s| s.serving_linear().into_iter().map(|v| v / power_ref_mw).collect())
                .collect(),
            mask: samples.iter().map(|s| s.serving_mask.clone()).collect(),
            locations: locations.to_vec(),
            power_ref_mw,
        })
    }

    /// Location-only inputs, used by the location k-means baseline.
    fn locations_only(locations: &[(f64, f64)]) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::invalid("no locations"));
        }
        Ok(GridInputs {
            y: vec![Vec::new(); locations.len()],
            mask: vec![Vec::new(); locations.len()],
            locations: locations.to_vec(),
            power_ref_mw: 1.0,
        })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn m(&self) -> usize {
        self.y.first().map_or(0, Vec::len)
    }
}

/// `(sum(sample_mask) / M) * ||(pred - y) restricted to used_mask||`.
pub(crate) fn valid_residual_norm(y: &[f64], sample_mask: &[bool], used_mask: &[bool], pred: &[f64]) -> f64 {
    let m = y.len();
    if m == 0 {
        return 0.0;
    }
    let valid = sample_mask.iter().filter(|&&v| v).count() as f64;
    let sq: f64 = (0..m).filter(|&b| used_mask[b]).map(|b| (pred[b] - y[b]).powi(2)).sum();
    valid / m as f64 * sq.sqrt()
}

/// Masked RSRP distance between a sample and a grid's APS, in linear power.
pub fn valid_distance(y: &[f64], mask: &[bool], a: &MeasurementMatrix, x: &[f64]) -> Result<f64> {
    if y.len() != a.m() || mask.len() != a.m() {
        return Err(Error::dims(format!("expected {} beams", a.m())));
    }
    let pred = crate::channel_model::expected_rsrp(a, x)?;
    Ok(valid_residual_norm(y, mask, mask, &pred))
}

/// Per-beam mean over valid entries, with the number of valid entries per beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedMean {
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
}

impl MaskedMean {
    pub fn mask(&self) -> Vec<bool> {
        self.counts.iter().map(|&c| c > 0).collect()
    }

    fn of(y: &[Vec<f64>], mask: &[Vec<bool>], members: impl Iterator<Item = usize>) -> Self {
        let m = y.first().map_or(0, Vec::len);
        let mut values = vec![0.0; m];
        let mut counts = vec![0usize; m];
        for i in members {
            for b in 0..m {
                if mask[i][b] {
                    values[b] += y[i][b];
                    counts[b] += 1;
                }
            }
        }
        for b in 0..m {
            if counts[b] > 0 {
                values[b] /= counts[b] as f64;
            }
        }
        MaskedMean { values, counts }
    }

    fn scaled(&self, factor: f64) -> Self {
        MaskedMean { values: self.values.iter().map(|v| v * factor).collect(), counts: self.counts.clone() }
    }
}

/// Masked mean of the serving-beam RSRP of `samples`, in mW.
pub fn grid_mean_rsrp(samples: &[&MrSample]) -> Result<MaskedMean> {
    let Some(first) = samples.first() else {
        return Err(Error::invalid("grid has no samples"));
    };
    if samples.iter().any(|s| s.m() != first.m()) {
        return Err(Error::dims("samples differ in beam count"));
    }
    let y: Vec<Vec<f64>> = samples.iter().map(|s| s.serving_linear()).collect();
    let mask: Vec<Vec<bool>> = samples.iter().map(|s| s.serving_mask.clone()).collect();
    Ok(MaskedMean::of(&y, &mask, 0..samples.len()))
}

/// Arithmetic mean location of every grid. Fails on an empty grid.
pub fn update_centroids(assignment: &[usize], locations: &[(f64, f64)], k: usize) -> Result<Vec<(f64, f64)>> {
    if assignment.len() != locations.len() {
        return Err(Error::dims("assignment and locations differ in length"));
    }
    let mut sums = vec![(0.0, 0.0, 0usize); k];
    for (&g, p) in assignment.iter().zip(locations) {
        let Some(s) = sums.get_mut(g) else {
            return Err(Error::invalid(format!("grid index {g} out of range for K = {k}")));
        };
        s.0 += p.0;
        s.1 += p.1;
        s.2 += 1;
    }
    sums.into_iter()
        .enumerate()
        .map(|(g, (x, y, n))| {
            if n == 0 {
                Err(Error::invalid(format!("grid {g} is empty")))
            } else {
                Ok((x / n as f64, y / n as f64))
            }
        })
        .collect()
}

/// k-means++ seeding and Lloyd refinement on `(y_i, p_i)` with the joint distance.
pub fn init_kmeanspp(samples: &[MrSample], locations: &[(f64, f64)], k: usize, beta: f64, seed: u64) -> Result<Vec<usize>> {
    let inputs = GridInputs::new(samples, locations, DEFAULT_POWER_REF_DBM)?;
    kmeans(&inputs, k, JointMetric { rsrp: 1.0, beta }, KMEANS_ITERS, seed)
}

const KMEANS_ITERS: usize = 50;

/// Assignment cost of sample `i` against one grid: valid distance plus `beta` times centroid distance, in scaled power units.
pub fn assignment_criterion(inputs: &GridInputs, i: usize, pred: &[f64], centroid: (f64, f64), beta: f64) -> f64 {
    let p = inputs.locations[i];
    valid_residual_norm(&inputs.y[i], &inputs.mask[i], &inputs.mask[i], pred) + beta * (p.0 - centroid.0).hypot(p.1 - centroid.1)
}

/// Per-sample argmin of [`assignment_criterion`], ties to the lowest grid.
pub fn assign_grids(inputs: &GridInputs, predictions: &[Vec<f64>], centroids: &[(f64, f64)], beta: f64) -> Result<Vec<usize>> {
    if predictions.is_empty() || predictions.len() != centroids.len() {
        return Err(Error::invalid("need one prediction and one centroid per grid, K >= 1"));
    }
    Ok((0..inputs.len())
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for (k, (pred, &c)) in predictions.iter().zip(centroids).enumerate() {
                let d = assignment_criterion(inputs, i, pred, c, beta);
                if d < best.1 {
                    best = (k, d);
                }
            }
            best.0
        })
        .collect())
}

/// Settings of [`fit_joint`] and [`fit_fixed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub c: usize,
    pub beta: f64,
    pub iterations: usize,
    pub sigma_theta: f64,
    pub sigma_phi: f64,
    pub seed: u64,
    pub solver: Solver,
    pub power_ref_dbm: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            k: 24,
            c: 6,
            beta: 1.0,
            iterations: 15,
            sigma_theta: DEFAULT_SIGMA_THETA,
            sigma_phi: DEFAULT_SIGMA_PHI,
            seed: 7,
            solver: Solver::Gm,
            power_ref_dbm: DEFAULT_POWER_REF_DBM,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.c == 0 {
            return Err(Error::invalid("k and c must be positive"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta must be finite and nonnegative"));
        }
        if !(self.sigma_theta > 0.0 && self.sigma_phi > 0.0) {
            return Err(Error::invalid("kernel widths must be positive"));
        }
        if !self.power_ref_dbm.is_finite() {
            return Err(Error::invalid("power_ref_dbm must be finite"));
        }
        Ok(())
    }
}

/// Grids, their centroids, masked mean RSRP (mW) and APS estimates (mW).
#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    pub k: usize,
    pub assignment: Vec<usize>,
    /// Training locations the grids were built from.
    pub locations: Vec<(f64, f64)>,
    pub centroids: Vec<(f64, f64)>,
    pub mean_rsrp: Vec<MaskedMean>,
    pub aps: Vec<ApsEstimate>,
    pub beta: f64,
    pub solver: Solver,
}

impl GridModel {
    /// Predicted linear RSRP `A x_k` of grid `k`.
    pub fn predicted(&self, k: usize, a: &MeasurementMatrix) -> Result<Vec<f64>> {
        crate::channel_model::expected_rsrp(a, &self.aps[k].x)
    }

    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == k).collect()
    }

    pub fn to_file(&self, report: Option<&FitReport>) -> ModelFile {
        ModelFile {
            k: self.k,
            n_a: self.aps.first().map_or(0, |x| x.x.len()),
            beta: self.beta,
            solver: self.solver,
            assignment: self.assignment.clone(),
            locations: self.locations.clone(),
            centroids: self.centroids.clone(),
            mean_rsrp: self.mean_rsrp.clone(),
            aps: self.aps.iter().map(ApsEstimate::entries).collect(),
            report: report.cloned(),
        }
    }
}

/// Serialized model: per-grid APS kept as sparse (angle index, power) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub k: usize,
    pub n_a: usize,
    pub beta: f64,
    pub solver: Solver,
    pub assignment: Vec<usize>,
    pub locations: Vec<(f64, f64)>,
    pub centroids: Vec<(f64, f64)>,
    pub mean_rsrp: Vec<MaskedMean>,
    pub aps: Vec<Vec<(usize, f64)>>,
    pub report: Option<FitReport>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<(GridModel, Option<FitReport>)> {
        if self.centroids.len() != self.k || self.aps.len() != self.k || self.mean_rsrp.len() != self.k {
            return Err(Error::dims(format!("model file declares k = {} but per-grid lists disagree", self.k)));
        }
        if self.locations.len() != self.assignment.len() {
            return Err(Error::dims("model file holds a different number of locations and assignments"));
        }
        if let Some(&g) = self.assignment.iter().find(|&&g| g >= self.k) {
            return Err(Error::invalid(format!("assignment references grid {g} >= k = {}", self.k)));
        }
        let aps = self.aps.iter().map(|e| ApsEstimate::from_entries(self.n_a, e)).collect::<Result<Vec<_>>>()?;
        let model = GridModel {
            k: self.k,
            assignment: self.assignment,
            locations: self.locations,
            centroids: self.centroids,
            mean_rsrp: self.mean_rsrp,
            aps,
            beta: self.beta,
            solver: self.solver,
        };
        Ok((model, self.report))
    }
}

/// Objective terms of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    /// Grid-size weighted squared masked RSRP residual, in scaled power units.
    pub data: f64,
    /// Grid-size weighted squared centroid distance times beta.
    pub location: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub objective_trace: Vec<ObjectiveTerms>,
    pub iterations: usize,
    pub nonempty_trace: Vec<usize>,
    /// (iteration, grid, sample) of every empty-grid re-seed.
    pub reseeds: Vec<(usize, usize, usize)>,
    pub power_ref_dbm: f64,
}

/// State exposed to an observer after each outer iteration.
#[derive(Debug, Clone)]
pub struct IterationSnapshot<'a> {
    pub iteration: usize,
    pub inputs: &'a GridInputs,
    /// Centroids used by the assignment step.
    pub centroids_before: &'a [(f64, f64)],
    /// Scaled `A x_k` used by the assignment step.
    pub predictions: &'a [Vec<f64>],
    /// Pure argmin assignment, before any empty-grid re-seed.
    pub argmin: &'a [usize],
    pub assignment: &'a [usize],
    pub centroids_after: &'a [(f64, f64)],
}

struct GridFit {
    mean: MaskedMean,
    aps: ApsEstimate,
    pred: Vec<f64>,
}

/// Fits one APS per grid on scaled masked means; returned APS are scaled too.
fn fit_grids(
    inputs: &GridInputs,
    assignment: &[usize],
    centroids: &[(f64, f64)],
    a: &MeasurementMatrix,
    grid: &AngularGrid,
    p_bs: (f64, f64, f64),
    cfg: &FitConfig,
) -> Result<Vec<GridFit>> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); centroids.len()];
    for (i, &g) in assignment.iter().enumerate() {
        members[g].push(i);
    }
    members
        .iter()
        .zip(centroids)
        .map(|(idx, &centroid)| {
            let mean = MaskedMean::of(&inputs.y, &inputs.mask, idx.iter().copied());
            let mask = mean.mask();
            let aps = if mask.iter().any(|&v| v) {
                let prior = GeometryPrior::new(centroid, p_bs).with_sigmas(cfg.sigma_theta, cfg.sigma_phi);
                estimate_aps(cfg.solver, &mean.values, &mask, a, grid, &prior, cfg.c)?
            } else {
                ApsEstimate::zero(a.n_a(), 0.0)
            };
            let pred = crate::channel_model::expected_rsrp(a, &aps.x)?;
            Ok(GridFit { mean, aps, pred })
        })
        .collect()
}

fn objective(inputs: &GridInputs, assignment: &[usize], preds: &[Vec<f64>], centroids: &[(f64, f64)], beta: f64) -> ObjectiveTerms {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    assignment.iter().for_each(|&g| sizes[g] += 1);
    let (mut data, mut loc) = (0.0, 0.0);
    for (i, &g) in assignment.iter().enumerate() {
        let w = 1.0 / sizes[g] as f64;
        let r: f64 = (0..inputs.m())
            .filter(|&b| inputs.mask[i][b])
            .map(|b| (preds[g][b] - inputs.y[i][b]).powi(2))
            .sum();
        let p = inputs.locations[i];
        let c = centroids[g];
        data += w * r;
        loc += w * ((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2));
    }
    ObjectiveTerms { data, location: beta * loc, total: data + beta * loc }
}

fn into_model(inputs: &GridInputs, assignment: Vec<usize>, centroids: Vec<(f64, f64)>, fits: Vec<GridFit>, cfg: &FitConfig) -> GridModel {
    let r = inputs.power_ref_mw;
    let (mean_rsrp, aps) = fits
        .into_iter()
        .map(|f| {
            let mut aps = f.aps;
            aps.x.iter_mut().for_each(|v| *v *= r);
            aps.residual_norm *= r;
            aps.residual_trace.iter_mut().for_each(|v| *v *= r);
            (f.mean.scaled(r), aps)
        })
        .unzip();
    GridModel {
        k: centroids.len(),
        assignment,
        locations: inputs.locations.clone(),
        centroids,
        mean_rsrp,
        aps,
        beta: cfg.beta,
        solver: cfg.solver,
    }
}

/// Alternating grid construction and APS estimation.
pub fn fit_joint(
    samples: &[MrSample],
    locations: &[(f64, f64)],
    a: &MeasurementMatrix,
    grid: &AngularGrid,
    p_bs: (f64, f64, f64),
    cfg: &FitConfig,
) -> Result<(GridModel, FitReport)> {
    fit_joint_observed(samples, locations, a, grid, p_bs, cfg, |_| {})
}

/// [`fit_joint`] with a callback invoked after every outer iteration.
pub fn fit_joint_observed(
    samples: &[MrSample],
    locations: &[(f64, f64)],
    a: &MeasurementMatrix,
    grid: &AngularGrid,
    p_bs: (f64, f64, f64),
    cfg: &FitConfig,
    mut observer: impl FnMut(&IterationSnapshot<'_>),
) -> Result<(GridModel, FitReport)> {
    cfg.validate()?;
    let inputs = GridInputs::new(samples, locations, cfg.power_ref_dbm)?;
    if inputs.m() != a.m() {
        return Err(Error::dims(format!("samples have {} beams but A has {} rows", inputs.m(), a.m())));
    }
    let k = cfg.k;
    let mut assignment = kmeans(&inputs, k, JointMetric { rsrp: 1.0, beta: cfg.beta }, KMEANS_ITERS, cfg.seed)?;
    let mut centroids = update_centroids(&assignment, &inputs.locations, k)?;
    let mut report = FitReport {
        objective_trace: Vec::new(),
        iterations: 0,
        nonempty_trace: Vec::new(),
        reseeds: Vec::new(),
        power_ref_dbm: cfg.power_ref_dbm,
    };

    for it in 0..cfg.iterations {
        let fits = fit_grids(&inputs, &assignment, &centroids, a, grid, p_bs, cfg)?;
        let preds: Vec<Vec<f64>> = fits.into_iter().map(|f| f.pred).collect();
        let argmin = assign_grids(&inputs, &preds, &centroids, cfg.beta)?;

        let mut next = argmin.clone();
        let mut sizes = vec![0usize; k];
        next.iter().for_each(|&g| sizes[g] += 1);
        report.nonempty_trace.push(sizes.iter().filter(|&&s| s > 0).count());
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let worst = (0..next.len())
                .filter(|&i| sizes[next[i]] > 1)
                .map(|i| (i, assignment_criterion(&inputs, i, &preds[next[i]], centroids[next[i]], cfg.beta)))
                .fold((usize::MAX, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
            if worst.0 == usize::MAX {
                return Err(Error::invalid(format!("cannot keep {k} grids nonempty")));
            }
            log::debug!("iteration {it}: re-seeding empty grid {empty} with sample {}", worst.0);
            report.reseeds.push((it, empty, worst.0));
            sizes[next[worst.0]] -= 1;
            sizes[empty] += 1;
            next[worst.0] = empty;
        }

        let new_centroids = update_centroids(&next, &inputs.locations, k)?;
        let terms = objective(&inputs, &next, &preds, &new_centroids, cfg.beta);
        if !terms.total.is_finite() {
            return Err(Error::Numerical(format!("objective is not finite at iteration {it}")));
        }
        report.objective_trace.push(terms);
        report.iterations = it + 1;
        observer(&IterationSnapshot {
            iteration: it,
            inputs: &inputs,
            centroids_before: &centroids,
            predictions: &preds,
            argmin: &argmin,
            assignment: &next,
            centroids_after: &new_centroids,
        });
        let converged = next == assignment;
        assignment = next;
        centroids = new_centroids;
        if converged {
            break;
        }
    }

    let fits = fit_grids(&inputs, &assignment, &centroids, a, grid, p_bs, cfg)?;
    Ok((into_model(&inputs, assignment, centroids, fits, cfg), report))
}

/// Fits APS on a fixed partition. Empty labels are dropped and the rest renumbered in order.
pub fn fit_fixed(
    samples: &[MrSample],
    locations: &[(f64, f64)],
    assignment: &[usize],
    a: &MeasurementMatrix,
    grid: &AngularGrid,
    p_bs: (f64, f64, f64),
    cfg: &FitConfig,
) -> Result<GridModel> {
    cfg.validate()?;
    let inputs = GridInputs::new(samples, locations, cfg.power_ref_dbm)?;
    if assignment.len() != inputs.len() {
        return Err(Error::dims("assignment length differs from sample count"));
    }
    let assignment = compact_labels(assignment);
    let k = assignment.iter().max().map_or(0, |&g| g + 1);
    let centroids = update_centroids(&assignment, &inputs.locations, k)?;
    let fits = fit_grids(&inputs, &assignment, &centroids, a, grid, p_bs, cfg)?;
    Ok(into_model(&inputs, assignment, centroids, fits, cfg))
}

fn compact_labels(labels: &[usize]) -> Vec<usize> {
    let mut used: Vec<usize> = labels.to_vec();
    used.sort_unstable();
    used.dedup();
    labels.iter().map(|g| used.binary_search(g).unwrap_or(0)).collect()
}

/// Square cells of side `width` anchored at the bounding-box minimum; empty cells dropped.
pub fn baseline_uniform_grid(locations: &[(f64, f64)], width: f64) -> Result<Vec<usize>> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::invalid("grid width must be positive"));
    }
    if locations.is_empty() {
        return Err(Error::invalid("no locations"));
    }
    let x0 = locations.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let y0 = locations.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let cells: Vec<(i64, i64)> = locations
        .iter()
        .map(|p| (((p.0 - x0) / width).floor() as i64, ((p.1 - y0) / width).floor() as i64))
        .collect();
    let mut used = cells.clone();
    used.sort_unstable();
    used.dedup();
    Ok(cells.iter().map(|c| used.binary_search(c).unwrap_or(0)).collect())
}

/// Lloyd k-means on planar locations.
pub fn baseline_kmeans_location(locations: &[(f64, f64)], k: usize, seed: u64) -> Result<Vec<usize>> {
    let inputs = GridInputs::locations_only(locations)?;
    kmeans(&inputs, k, JointMetric { rsrp: 0.0, beta: 1.0 }, KMEANS_ITERS, seed)
}

/// Lloyd k-means on serving RSRP with the masked valid distance.
pub fn baseline_kmeans_rsrp(samples: &[MrSample], k: usize, seed: u64) -> Result<Vec<usize>> {
    let inputs = GridInputs::new(samples, &vec![(0.0, 0.0); samples.len()], DEFAULT_POWER_REF_DBM)?;
    kmeans(&inputs, k, JointMetric { rsrp: 1.0, beta: 0.0 }, KMEANS_ITERS, seed)
}

/// Adjusted Rand index between two labelings of the same samples.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims("labelings differ in length"));
    }
    let n = a.len();
    let ka = a.iter().max().map_or(0, |&v| v + 1);
    let kb = b.iter().max().map_or(0, |&v| v + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&i, &j) in a.iter().zip(b) {
        table[i][j] += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let expected = rows * cols / c2(n as u64).max(1.0);
    let max = 0.5 * (rows + cols);
    if (max - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests;
