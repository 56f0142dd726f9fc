use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::pipeline::{
    assemble_report, build_grids, estimate_locations, evaluate, prepare_world, GridMethod, LocationEstimate,
    LocationSource, PipelineConfig, World,
};
use crate::error::{Error, Result};
use crate::grid_builder::FitConfig;
use crate::sparse::Solver;

/// Grid of pipeline runs sharing one base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub base: PipelineConfig,
    pub seeds: Vec<u64>,
    pub methods: Vec<GridMethod>,
    pub solvers: Vec<Solver>,
    pub ks: Vec<usize>,
    /// Only used with HGNN locations; true-location rows ignore it.
    pub label_fractions: Vec<f64>,
    pub location_sources: Vec<LocationSource>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let base = PipelineConfig::default();
        SweepSpec {
            seeds: vec![base.seed],
            methods: vec![GridMethod::Joint, GridMethod::Uniform, GridMethod::KmeansLocation, GridMethod::KmeansRsrp],
            solvers: vec![base.fit.solver],
            ks: vec![base.fit.k],
            label_fractions: vec![base.dataset.label_fraction],
            location_sources: vec![LocationSource::True],
            base,
        }
    }
}

/// One sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: GridMethod,
    pub solver: Solver,
    pub k: usize,
    pub seed: u64,
    pub locations: LocationSource,
    pub label_fraction: Option<f64>,
    pub n_grids: usize,
    pub train_mae_db: f64,
    pub test_mae_db: f64,
    pub mean_distance_error_m: Option<f64>,
    pub knn_distance_error_m: Option<f64>,
}

/// Maps `f` over `items` on all available cores, keeping input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    if threads <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("sweep worker panicked")).collect()
    })
}

#[derive(Debug, Clone, Copy)]
struct LocKey {
    seed: u64,
    source: LocationSource,
    lf: Option<f64>,
}

fn config_for(spec: &SweepSpec, key: LocKey) -> PipelineConfig {
    let mut cfg = spec.base.clone();
    cfg.seed = key.seed;
    cfg.locations = key.source;
    if let Some(lf) = key.lf {
        cfg.dataset.label_fraction = lf;
    }
    cfg
}

/// Runs every (seed, location source, label fraction, method, solver, K) cell.
///
/// Worlds and localizations are computed once per (seed, source, label fraction) and shared
/// by all grid methods.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.seeds.is_empty() || spec.methods.is_empty() || spec.solvers.is_empty() || spec.ks.is_empty() {
        return Err(Error::invalid("sweep needs at least one seed, method, solver and k"));
    }
    let mut keys = Vec::new();
    for &seed in &spec.seeds {
        for &source in &spec.location_sources {
            match source {
                LocationSource::True => keys.push(LocKey { seed, source, lf: None }),
                LocationSource::Hgnn => {
                    keys.extend(spec.label_fractions.iter().map(|&lf| LocKey { seed, source, lf: Some(lf) }))
                }
            }
        }
    }
    let located: Vec<(World, LocationEstimate)> = par_map(&keys, |&key| -> Result<_> {
        let cfg = config_for(spec, key);
        let world = prepare_world(&cfg).map_err(|e| e.in_stage("gen"))?;
        let loc = estimate_locations(&world, &cfg).map_err(|e| e.in_stage("localize"))?;
        Ok((world, loc))
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (ki, _) in keys.iter().enumerate() {
        for &method in &spec.methods {
            for &solver in &spec.solvers {
                for &k in &spec.ks {
                    cells.push((ki, method, solver, k));
                }
            }
        }
    }
    par_map(&cells, |&(ki, method, solver, k)| -> Result<SweepRow> {
        let key = keys[ki];
        let (world, loc) = &located[ki];
        let mut cfg = config_for(spec, key);
        cfg.method = method;
        cfg.fit = FitConfig { solver, k, ..cfg.fit };
        let (model, report) = build_grids(world, &loc.locations, &cfg).map_err(|e| e.in_stage("fit"))?;
        let (tr, te) = evaluate(world, &model).map_err(|e| e.in_stage("eval"))?;
        let r = assemble_report(&cfg, loc, &model, report.as_ref(), &tr, &te);
        Ok(SweepRow {
            method,
            solver,
            k,
            seed: key.seed,
            locations: key.source,
            label_fraction: key.lf,
            n_grids: r.n_grids,
            train_mae_db: r.train_mae_db,
            test_mae_db: r.test_mae_db,
            mean_distance_error_m: r.mean_distance_error_m,
            knn_distance_error_m: r.knn_distance_error_m,
        })
    })
    .into_iter()
    .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
    }
    w.flush().map_err(|e| Error::io("<sweep>", e))
}

/// Median of the finite values; `None` for an empty input.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Median test MAE per (method, solver, source, label fraction) over seeds.
pub fn median_test_mae(rows: &[SweepRow]) -> BTreeMap<String, f64> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows {
        let lf = r.label_fraction.map_or_else(|| "-".to_string(), |v| v.to_string());
        groups.entry(format!("{}/{}/k{}/{}/{}", r.method, r.solver, r.k, r.locations, lf)).or_default().push(r.test_mae_db);
    }
    groups.into_iter().filter_map(|(k, v)| median(&v).map(|m| (k, m))).collect()
}
