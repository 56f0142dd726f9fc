use std::fs;
use std::path::{Path, PathBuf};

use mrlscm_core::channel_model::{AngularGrid, ChannelConfig, MeasurementMatrix};
use mrlscm_core::eval::{
    assign_test_grids, read_locations_csv, run_pipeline, sweep, test_mae, train_mae, write_locations_csv,
    write_sweep_csv, GridDiagnostics, GridMethod, PipelineConfig, SweepSpec,
};
use mrlscm_core::grid_builder::{
    baseline_kmeans_location, baseline_kmeans_rsrp, baseline_uniform_grid, fit_fixed, fit_joint, FitConfig, ModelFile,
};
use mrlscm_core::hgnn::{localize, mean_distance_error, TrainConfig};
use mrlscm_core::sparse::{estimate_aps, GeometryPrior, Solver};
use mrlscm_core::synth::{
    generate_dataset_with, generate_scenario_with, read_csv, select_labeled, write_csv, DatasetConfig, MrSample,
    Scenario, ScenarioConfig,
};
use serde::Serialize;

use crate::Command;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mrlscm_core::Error),

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}, line {line}: {msg}")]
    Csv { path: PathBuf, line: u64, msg: String },

    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| CliError::Io { path: path.into(), source })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|source| CliError::Json { path: path.into(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(mrlscm_core::Error::from)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn read_matrix(path: &Path) -> Result<MeasurementMatrix> {
    Ok(MeasurementMatrix::from_bytes(&read_bytes(path)?)?)
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    Ok(Scenario::from_json(&read_text(path)?)?)
}

fn parse_floats(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", v.len()));
    }
    Ok(v)
}

pub fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    parse_floats(s, 2).map(|v| (v[0], v[1]))
}

pub fn parse_triple(s: &str) -> std::result::Result<(f64, f64, f64), String> {
    parse_floats(s, 3).map(|v| (v[0], v[1], v[2]))
}

fn check_grid(grid: &AngularGrid, a: &MeasurementMatrix) -> Result<()> {
    if grid.n_a() != a.n_a() {
        return Err(usage(format!(
            "angular grid has {} angles but the matrix has {} columns; pass the config the matrix was built from",
            grid.n_a(),
            a.n_a()
        )));
    }
    Ok(())
}

/// `beam,power_mw` rows; `x`, `nan` or an empty field marks a missing beam.
fn read_ybar(path: &Path) -> Result<(Vec<f64>, Vec<bool>)> {
    let file = fs::File::open(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    let mut reader = csv::Reader::from_reader(file);
    let mut y = Vec::new();
    let mut mask = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let line = row as u64 + 2;
        let err = |msg: String| CliError::Csv { path: path.into(), line, msg };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        if rec.len() != 2 {
            return Err(err(format!("expected 2 fields, found {}", rec.len())));
        }
        let beam: usize = rec[0].trim().parse().map_err(|e| err(format!("beam index: {e}")))?;
        if beam != y.len() {
            return Err(err(format!("expected beam {}, found {beam}", y.len())));
        }
        let field = rec[1].trim();
        if field.is_empty() || field.eq_ignore_ascii_case("x") || field.eq_ignore_ascii_case("nan") {
            y.push(0.0);
            mask.push(false);
        } else {
            let v: f64 = field.parse().map_err(|e| err(format!("power: {e}")))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(err(format!("power must be finite and nonnegative, got {v}")));
            }
            y.push(v);
            mask.push(true);
        }
    }
    Ok((y, mask))
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Matrix { config, adjusted, out } => {
            let cfg = match config {
                Some(p) => read_json::<ChannelConfig>(&p)?,
                None if adjusted => ChannelConfig::default_adjusted(),
                None => ChannelConfig::default_serving(),
            };
            let (_, a) = cfg.build()?;
            write_bytes(&out, &a.to_bytes())?;
            log::info!("wrote {} x {} matrix ({})", a.m(), a.n_a(), a.digest());
            Ok(())
        }
        Command::Scenario { config, regions, c_true, seed, out } => {
            let mut cfg = match config {
                Some(p) => read_json::<ScenarioConfig>(&p)?,
                None => ScenarioConfig::default(),
            };
            if let Some(r) = regions {
                cfg.n_regions = r;
            }
            if let Some(c) = c_true {
                cfg.c_true = c;
            }
            let scenario = generate_scenario_with(&cfg, seed)?;
            write_bytes(&out, scenario.to_json()?.as_bytes())
        }
        Command::Gen {
            scenario,
            dataset,
            shadowing,
            label_fraction,
            seed,
            out,
            out_test,
            matrix_out,
            matrix_test_out,
        } => {
            let scenario = read_scenario(&scenario)?;
            let mut cfg = match dataset {
                Some(p) => read_json::<DatasetConfig>(&p)?,
                None => DatasetConfig::default(),
            };
            if let Some(s) = shadowing {
                cfg.shadowing_db = s;
            }
            if let Some(lf) = label_fraction {
                cfg.label_fraction = lf;
            }
            let (_, a) = scenario.serving.build()?;
            let (_, a_prime) = scenario.adjusted.build()?;
            let data = generate_dataset_with(&scenario, &cfg, &a, &a_prime, seed)?;
            write_csv(&data.train, &out)?;
            write_csv(&data.test, &out_test)?;
            if let Some(p) = matrix_out {
                write_bytes(&p, &a.to_bytes())?;
            }
            if let Some(p) = matrix_test_out {
                write_bytes(&p, &a_prime.to_bytes())?;
            }
            Ok(())
        }
        Command::Localize {
            train,
            label_fraction,
            k,
            gamma,
            tau,
            epochs,
            lr,
            momentum,
            widths,
            seed,
            out,
            checkpoint,
        } => {
            let samples = read_csv(&train)?;
            let labeled = match label_fraction {
                Some(lf) => select_labeled(samples.len(), lf, seed)?,
                None => samples.iter().map(|s| s.is_labeled).collect(),
            };
            let cfg = TrainConfig {
                gamma,
                k,
                tau,
                learning_rate: lr,
                momentum,
                epochs,
                seed,
                label_fraction: label_fraction.unwrap_or_default(),
                widths,
                ..TrainConfig::default()
            };
            let loc = localize(&samples, &labeled, &cfg)?;
            let locations: Vec<(f64, f64)> = samples
                .iter()
                .zip(&labeled)
                .zip(&loc.predictions)
                .map(|((s, &l), &p)| if l { s.true_location.unwrap_or(p) } else { p })
                .collect();
            write_locations_csv(&locations, &out)?;
            report_mde(&samples, &labeled, &loc.predictions);
            if let Some(prefix) = checkpoint {
                let (bytes, meta) = loc.params.to_checkpoint()?;
                write_bytes(&prefix.with_extension("bin"), &bytes)?;
                write_bytes(&prefix.with_extension("json"), meta.as_bytes())?;
            }
            Ok(())
        }
        Command::Aps { matrix, config, ybar, centroid, bs, c, solver, sigma_theta, sigma_phi, out } => {
            let a = read_matrix(&matrix)?;
            let grid = match config {
                Some(p) => read_json::<ChannelConfig>(&p)?.grid()?,
                None => ChannelConfig::default_serving().grid()?,
            };
            check_grid(&grid, &a)?;
            let solver: Solver = solver.parse()?;
            let (y, mask) = read_ybar(&ybar)?;
            if y.len() != a.m() {
                return Err(usage(format!("ybar has {} beams but the matrix has {} rows", y.len(), a.m())));
            }
            let prior = GeometryPrior::new(centroid, bs).with_sigmas(
                sigma_theta.unwrap_or(mrlscm_core::sparse::DEFAULT_SIGMA_THETA),
                sigma_phi.unwrap_or(mrlscm_core::sparse::DEFAULT_SIGMA_PHI),
            );
            let est = estimate_aps(solver, &y, &mask, &a, &grid, &prior, c)?;
            let mut text = String::from("angle_index,tilt_deg,azimuth_deg,power_linear\n");
            for (idx, power) in est.entries() {
                let (tilt, az) = grid.angle(idx);
                text.push_str(&format!("{idx},{tilt},{az},{power}\n"));
            }
            write_bytes(&out, text.as_bytes())
        }
        Command::Fit {
            train,
            locs,
            matrix,
            scenario,
            config,
            bs,
            method,
            solver,
            k,
            c,
            beta,
            iters,
            width,
            power_ref_dbm,
            seed,
            out,
        } => {
            let samples = read_csv(&train)?;
            let locations = read_locations_csv(&locs)?;
            let a = read_matrix(&matrix)?;
            let scenario = scenario.map(|p| read_scenario(&p)).transpose()?;
            let grid = match (&config, &scenario) {
                (Some(p), _) => read_json::<ChannelConfig>(p)?.grid()?,
                (None, Some(s)) => s.serving.grid()?,
                (None, None) => ChannelConfig::default_serving().grid()?,
            };
            check_grid(&grid, &a)?;
            let p_bs = bs.or(scenario.as_ref().map(|s| s.bs_location)).unwrap_or(ScenarioConfig::default().bs_location);
            let method: GridMethod = method.parse()?;
            let fit = FitConfig {
                k,
                c,
                beta,
                iterations: iters,
                seed,
                solver: solver.parse()?,
                power_ref_dbm: power_ref_dbm.unwrap_or(FitConfig::default().power_ref_dbm),
                ..FitConfig::default()
            };
            let (model, report) = match method {
                GridMethod::Joint => {
                    let (m, r) = fit_joint(&samples, &locations, &a, &grid, p_bs, &fit)?;
                    (m, Some(r))
                }
                other => {
                    let labels = match other {
                        GridMethod::Uniform => {
                            let w = match width {
                                Some(w) => w,
                                None => uniform_width(scenario.as_ref(), &locations, k),
                            };
                            baseline_uniform_grid(&locations, w)?
                        }
                        GridMethod::KmeansLocation => baseline_kmeans_location(&locations, k, seed)?,
                        _ => baseline_kmeans_rsrp(&samples, k, seed)?,
                    };
                    (fit_fixed(&samples, &locations, &labels, &a, &grid, p_bs, &fit)?, None)
                }
            };
            write_json(&out, &model.to_file(report.as_ref()))
        }
        Command::Eval { model, test, matrix_test, train, matrix, out } => {
            let (model, _) = read_json::<ModelFile>(&model)?.into_model()?;
            let test = read_csv(&test)?;
            let a_prime = read_matrix(&matrix_test)?;
            let train = train.map(|p| read_csv(&p)).transpose()?;
            let train_locs = match &train {
                Some(t) if t.iter().all(|s| s.true_location.is_some()) => {
                    t.iter().map(|s| s.true_location.expect("checked")).collect()
                }
                _ => model.locations.clone(),
            };
            if train_locs.len() != model.assignment.len() {
                return Err(usage("training reports do not match the model's sample count"));
            }
            let test_locs: Vec<(f64, f64)> = test
                .iter()
                .enumerate()
                .map(|(i, s)| s.true_location.ok_or_else(|| usage(format!("test sample {i} has no location"))))
                .collect::<Result<_>>()?;
            let assignment = assign_test_grids(&test_locs, &train_locs, &model.assignment, model.k)?;
            let te = test_mae(&model, &test, &assignment, &a_prime)?;
            let tr = match (&train, matrix) {
                (Some(t), Some(p)) => Some(train_mae(&model, t, &read_matrix(&p)?)?),
                _ => None,
            };
            let report = CliEvalReport {
                n_grids: model.k,
                solver: model.solver,
                test_mae_db: te.mae_db,
                train_mae_db: tr.as_ref().map(|t| t.mae_db),
                grids: (0..model.k)
                    .map(|k| GridDiagnostics {
                        train_samples: model.members(k).len(),
                        test_samples: te.counts[k],
                        train_mae_db: tr.as_ref().and_then(|t| t.per_grid[k]),
                        test_mae_db: te.per_grid[k],
                    })
                    .collect(),
            };
            println!("test MAE {:.3} dB over {} grids", report.test_mae_db, report.n_grids);
            write_json(&out, &report)
        }
        Command::Sweep { spec, out } => {
            let spec: SweepSpec = read_json(&spec)?;
            let rows = sweep(&spec)?;
            let file = fs::File::create(&out).map_err(|source| CliError::Io { path: out.clone(), source })?;
            write_sweep_csv(&rows, std::io::BufWriter::new(file))?;
            for (key, med) in mrlscm_core::eval::median_test_mae(&rows) {
                println!("{key}\tmedian test MAE {med:.3} dB");
            }
            Ok(())
        }
        Command::Run { config, out_dir } => {
            let cfg = match config {
                Some(p) => read_json::<PipelineConfig>(&p)?,
                None => PipelineConfig::default(),
            };
            let report = run_pipeline(&cfg, Some(&out_dir))?;
            println!(
                "{} / {}: train MAE {:.3} dB, test MAE {:.3} dB, {} grids",
                report.method, report.solver, report.train_mae_db, report.test_mae_db, report.n_grids
            );
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct CliEvalReport {
    n_grids: usize,
    solver: Solver,
    test_mae_db: f64,
    train_mae_db: Option<f64>,
    grids: Vec<GridDiagnostics>,
}

fn uniform_width(scenario: Option<&Scenario>, locations: &[(f64, f64)], k: usize) -> f64 {
    let area = match scenario {
        Some(s) => s.area.size(),
        None => {
            let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for &(x, y) in locations {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
            ((x1 - x0) * (y1 - y0)).max(1.0)
        }
    };
    (area / k.max(1) as f64).sqrt()
}

fn report_mde(samples: &[MrSample], labeled: &[bool], predictions: &[(f64, f64)]) {
    let Some(truth) = samples.iter().map(|s| s.true_location).collect::<Option<Vec<_>>>() else {
        return;
    };
    let unlabeled: Vec<usize> = (0..samples.len()).filter(|&i| !labeled[i]).collect();
    if let Ok(mde) = mean_distance_error(predictions, &truth, &unlabeled) {
        println!("mean distance error on {} unlabeled samples: {mde:.2} m", unlabeled.len());
    }
}
