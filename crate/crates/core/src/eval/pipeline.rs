use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::io::{write_file, write_locations_csv};
use super::metrics::{assign_test_grids, test_mae, train_mae};
use crate::channel_model::AngularGrid;
use crate::error::{Error, Result};
use crate::grid_builder::{
    baseline_kmeans_location, baseline_kmeans_rsrp, baseline_uniform_grid, fit_fixed, fit_joint, FitConfig,
    FitReport, GridModel, ObjectiveTerms,
};
use crate::hgnn::{knn_baseline, localize, mean_distance_error, Localization, TrainConfig};
use crate::sparse::Solver;
use crate::synth::{generate_dataset_with, generate_scenario_with, write_csv, Dataset, DatasetConfig, Scenario, ScenarioConfig};

/// How training samples are grouped into grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridMethod {
    /// Alternating joint construction.
    #[default]
    Joint,
    Uniform,
    KmeansLocation,
    KmeansRsrp,
}

impl FromStr for GridMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(GridMethod::Joint),
            "uniform" => Ok(GridMethod::Uniform),
            "kmeans_location" | "kmeans-location" => Ok(GridMethod::KmeansLocation),
            "kmeans_rsrp" | "kmeans-rsrp" => Ok(GridMethod::KmeansRsrp),
            other => Err(Error::invalid(format!(
                "unknown grid method `{other}` (expected joint, uniform, kmeans_location or kmeans_rsrp)"
            ))),
        }
    }
}

impl std::fmt::Display for GridMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GridMethod::Joint => "joint",
            GridMethod::Uniform => "uniform",
            GridMethod::KmeansLocation => "kmeans_location",
            GridMethod::KmeansRsrp => "kmeans_rsrp",
        })
    }
}

/// Which training locations feed grid construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LocationSource {
    #[default]
    True,
    Hgnn,
}

impl std::fmt::Display for LocationSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LocationSource::True => "true",
            LocationSource::Hgnn => "hgnn",
        })
    }
}

/// Everything a pipeline run depends on. Stage seeds derive from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub dataset: DatasetConfig,
    pub hgnn: TrainConfig,
    pub fit: FitConfig,
    pub method: GridMethod,
    pub locations: LocationSource,
    /// Uniform cell side in meters; defaults to `sqrt(area / k)`.
    pub uniform_width: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let scenario = ScenarioConfig::default();
        let fit = FitConfig { k: scenario.n_regions, ..FitConfig::default() };
        PipelineConfig {
            seed: 1,
            scenario,
            dataset: DatasetConfig::default(),
            hgnn: TrainConfig::default(),
            fit,
            method: GridMethod::Joint,
            locations: LocationSource::True,
            uniform_width: None,
        }
    }
}

pub(crate) fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed.wrapping_add(stage.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Scenario, dataset and angular grid of one seed.
#[derive(Debug, Clone)]
pub struct World {
    pub scenario: Scenario,
    pub dataset: Dataset,
    pub grid: AngularGrid,
}

impl World {
    pub fn true_train_locations(&self) -> Result<Vec<(f64, f64)>> {
        true_locations(&self.dataset.train, "training")
    }

    pub fn true_test_locations(&self) -> Result<Vec<(f64, f64)>> {
        true_locations(&self.dataset.test, "test")
    }
}

fn true_locations(samples: &[crate::synth::MrSample], what: &str) -> Result<Vec<(f64, f64)>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| s.true_location.ok_or_else(|| Error::invalid(format!("{what} sample {i} has no location"))))
        .collect()
}

pub fn prepare_world(cfg: &PipelineConfig) -> Result<World> {
    let scenario = generate_scenario_with(&cfg.scenario, cfg.seed)?;
    let (grid, a) = scenario.serving.build()?;
    let (_, a_prime) = scenario.adjusted.build()?;
    let dataset = generate_dataset_with(&scenario, &cfg.dataset, &a, &a_prime, cfg.seed)?;
    Ok(World { scenario, dataset, grid })
}

/// Training locations handed to grid construction, with localization diagnostics.
#[derive(Debug, Clone)]
pub struct LocationEstimate {
    pub locations: Vec<(f64, f64)>,
    /// Mean distance error of HGNN predictions on unlabeled samples.
    pub mean_distance_error_m: Option<f64>,
    /// Same for the beam-space kNN reference.
    pub knn_distance_error_m: Option<f64>,
    pub localization: Option<Localization>,
}

/// Labeled samples keep their known location; the rest get HGNN predictions.
pub fn estimate_locations(world: &World, cfg: &PipelineConfig) -> Result<LocationEstimate> {
    let truth = world.true_train_locations()?;
    if cfg.locations == LocationSource::True {
        return Ok(LocationEstimate {
            locations: truth,
            mean_distance_error_m: None,
            knn_distance_error_m: None,
            localization: None,
        });
    }
    let train = &world.dataset.train;
    let labeled: Vec<bool> = train.iter().map(|s| s.is_labeled).collect();
    let hcfg = TrainConfig { seed: stage_seed(cfg.seed, 1), label_fraction: cfg.dataset.label_fraction, ..cfg.hgnn.clone() };
    let loc = localize(train, &labeled, &hcfg)?;
    let unlabeled: Vec<usize> = (0..train.len()).filter(|&i| !labeled[i]).collect();
    let (mde, knn) = if unlabeled.is_empty() {
        (None, None)
    } else {
        let mde = mean_distance_error(&loc.predictions, &truth, &unlabeled)?;
        let pool: Vec<_> = train.iter().filter(|s| s.is_labeled).cloned().collect();
        let queries: Vec<_> = unlabeled.iter().map(|&i| train[i].clone()).collect();
        let knn = if pool.len() >= hcfg.k {
            let pred = knn_baseline(&pool, &queries, hcfg.k, hcfg.gamma)?;
            let qt: Vec<(f64, f64)> = unlabeled.iter().map(|&i| truth[i]).collect();
            Some(mean_distance_error(&pred, &qt, &(0..qt.len()).collect::<Vec<_>>())?)
        } else {
            None
        };
        (Some(mde), knn)
    };
    let locations = (0..train.len()).map(|i| if labeled[i] { truth[i] } else { loc.predictions[i] }).collect();
    Ok(LocationEstimate { locations, mean_distance_error_m: mde, knn_distance_error_m: knn, localization: Some(loc) })
}

/// Groups training samples with `cfg.method` and fits one APS per grid.
pub fn build_grids(world: &World, locations: &[(f64, f64)], cfg: &PipelineConfig) -> Result<(GridModel, Option<FitReport>)> {
    let train = &world.dataset.train;
    let a = &world.dataset.matrix_train;
    let p_bs = world.scenario.bs_location;
    let fit = FitConfig { seed: stage_seed(cfg.seed, 2), ..cfg.fit.clone() };
    let labels = match cfg.method {
        GridMethod::Joint => {
            let (model, report) = fit_joint(train, locations, a, &world.grid, p_bs, &fit)?;
            return Ok((model, Some(report)));
        }
        GridMethod::Uniform => {
            let width = match cfg.uniform_width {
                Some(w) => w,
                None => (world.scenario.area.size() / fit.k as f64).sqrt(),
            };
            baseline_uniform_grid(locations, width)?
        }
        GridMethod::KmeansLocation => baseline_kmeans_location(locations, fit.k, fit.seed)?,
        GridMethod::KmeansRsrp => baseline_kmeans_rsrp(train, fit.k, fit.seed)?,
    };
    Ok((fit_fixed(train, locations, &labels, a, &world.grid, p_bs, &fit)?, None))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDiagnostics {
    pub train_samples: usize,
    pub test_samples: usize,
    pub train_mae_db: Option<f64>,
    pub test_mae_db: Option<f64>,
}

/// Metrics of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub method: GridMethod,
    pub solver: Solver,
    pub locations: LocationSource,
    pub label_fraction: f64,
    pub k: usize,
    pub n_grids: usize,
    pub train_mae_db: f64,
    pub test_mae_db: f64,
    pub mean_distance_error_m: Option<f64>,
    pub knn_distance_error_m: Option<f64>,
    pub grids: Vec<GridDiagnostics>,
    pub objective_trace: Option<Vec<ObjectiveTerms>>,
}

/// Train and test MAE of `model`; test samples go to the grid of the nearest training sample
/// by true location.
pub fn evaluate(world: &World, model: &GridModel) -> Result<(super::MaeSummary, super::MaeSummary)> {
    let train_locs = world.true_train_locations()?;
    let test_locs = world.true_test_locations()?;
    let test_assignment = assign_test_grids(&test_locs, &train_locs, &model.assignment, model.k)?;
    let tr = train_mae(model, &world.dataset.train, &world.dataset.matrix_train)?;
    let te = test_mae(model, &world.dataset.test, &test_assignment, &world.dataset.matrix_test)?;
    Ok((tr, te))
}

pub(crate) fn assemble_report(
    cfg: &PipelineConfig,
    loc: &LocationEstimate,
    model: &GridModel,
    fit_report: Option<&FitReport>,
    train: &super::MaeSummary,
    test: &super::MaeSummary,
) -> EvalReport {
    EvalReport {
        seed: cfg.seed,
        method: cfg.method,
        solver: cfg.fit.solver,
        locations: cfg.locations,
        label_fraction: cfg.dataset.label_fraction,
        k: cfg.fit.k,
        n_grids: model.k,
        train_mae_db: train.mae_db,
        test_mae_db: test.mae_db,
        mean_distance_error_m: loc.mean_distance_error_m,
        knn_distance_error_m: loc.knn_distance_error_m,
        grids: (0..model.k)
            .map(|k| GridDiagnostics {
                train_samples: train.counts[k],
                test_samples: test.counts[k],
                train_mae_db: train.per_grid[k],
                test_mae_db: test.per_grid[k],
            })
            .collect(),
        objective_trace: fit_report.map(|r| r.objective_trace.clone()),
    }
}

/// Runs gen, localize, fit and eval. With `out_dir`, every intermediate artifact is written there.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: Option<&Path>) -> Result<EvalReport> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("config.json"), serde_json::to_string_pretty(cfg)?.as_bytes())?;
    }
    let world = prepare_world(cfg).map_err(|e| e.in_stage("gen"))?;
    if let Some(dir) = out_dir {
        (|| -> Result<()> {
            write_file(&dir.join("scenario.json"), world.scenario.to_json()?.as_bytes())?;
            write_csv(&world.dataset.train, dir.join("train.csv"))?;
            write_csv(&world.dataset.test, dir.join("test.csv"))?;
            write_file(&dir.join("A.bin"), &world.dataset.matrix_train.to_bytes())?;
            write_file(&dir.join("Aprime.bin"), &world.dataset.matrix_test.to_bytes())
        })()
        .map_err(|e| e.in_stage("gen"))?;
    }
    let loc = estimate_locations(&world, cfg).map_err(|e| e.in_stage("localize"))?;
    if let Some(dir) = out_dir {
        write_locations_csv(&loc.locations, &dir.join("locs.csv")).map_err(|e| e.in_stage("localize"))?;
    }
    let (model, fit_report) = build_grids(&world, &loc.locations, cfg).map_err(|e| e.in_stage("fit"))?;
    if let Some(dir) = out_dir {
        let text = serde_json::to_string_pretty(&model.to_file(fit_report.as_ref()))?;
        write_file(&dir.join("model.json"), text.as_bytes()).map_err(|e| e.in_stage("fit"))?;
    }
    let (tr, te) = evaluate(&world, &model).map_err(|e| e.in_stage("eval"))?;
    let report = assemble_report(cfg, &loc, &model, fit_report.as_ref(), &tr, &te);
    if let Some(dir) = out_dir {
        write_file(&dir.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())
            .map_err(|e| e.in_stage("eval"))?;
    }
    Ok(report)
}
