//! Synthetic ground truth and MR datasets.
//!
//! A [`Scenario`] partitions a rectangular service area into Voronoi regions, each with
//! a planted sparse APS whose dominant path points along the BS-to-region line of sight.
//! Users walk random-waypoint trajectories through the area and every report renders
//! the region's expected beam powers with log-normal shadowing and missing beams.

mod csv_io;
mod render;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel_model::{fnv1a_hex, AngularGrid, ChannelConfig};
use crate::error::{Error, Result};
use crate::sparse::{relative_angle, GeometryPrior};
use crate::units::{dbm_to_linear, MISSING_DBM};

pub use csv_io::{read_csv, read_csv_from, write_csv, write_csv_to};
pub use render::{
    generate_dataset, generate_dataset_with, render_samples, select_labeled, simulate_trajectories, Dataset, DatasetConfig, MissingPolicy,
    TrackPoint, Trajectory,
};

/// Axis-aligned service area in local planar meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Area {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let area = Area { x_min, x_max, y_min, y_max };
        area.validate()?;
        Ok(area)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite());
        if !finite || !(self.x_max > self.x_min) || !(self.y_max > self.y_min) {
            return Err(Error::invalid(format!("empty or non-finite area {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn size(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    fn sample(&self, rng: &mut impl Rng) -> (f64, f64) {
        (rng.random_range(self.x_min..=self.x_max), rng.random_range(self.y_min..=self.y_max))
    }
}

impl Default for Area {
    /// 400 m square in front of a BS at the origin.
    fn default() -> Self {
        Area { x_min: 20.0, x_max: 420.0, y_min: -200.0, y_max: 200.0 }
    }
}

/// Voronoi cell of the service area with its planted APS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub site: (f64, f64),
    /// Mean position of the cell's area.
    pub centroid: (f64, f64),
    /// Nonzero APS entries as (angle index, linear power) pairs, dominant path first.
    pub aps: Vec<(usize, f64)>,
}

impl Region {
    pub fn dense_aps(&self, n_a: usize) -> Vec<f64> {
        let mut x = vec![0.0; n_a];
        for &(i, p) in &self.aps {
            x[i] += p;
        }
        x
    }
}

/// Neighboring BS rendered with a single line-of-sight path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborCell {
    pub cell_id: u64,
    pub location: (f64, f64, f64),
    /// Planar bearing of the array normal, degrees.
    pub boresight: f64,
}

/// Log-distance power of the line-of-sight path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Propagation {
    /// Path power at 100 m, dBm.
    pub ref_dbm: f64,
    pub exponent: f64,
}

impl Default for Propagation {
    fn default() -> Self {
        Propagation { ref_dbm: -108.0, exponent: 3.0 }
    }
}

impl Propagation {
    /// Linear path power at 3D distance `d` meters.
    pub fn path_power(&self, d: f64) -> f64 {
        dbm_to_linear(self.ref_dbm - 10.0 * self.exponent * (d.max(1.0) / 100.0).log10())
    }
}

/// Ground truth shared by the generator and the evaluation harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub area: Area,
    pub bs_location: (f64, f64, f64),
    pub serving_cell_id: u64,
    pub regions: Vec<Region>,
    pub neighbors: Vec<NeighborCell>,
    pub c_true: usize,
    pub rng_seed: u64,
    /// Serving-cell channel before the parameter adjustment.
    pub serving: ChannelConfig,
    /// Serving-cell channel after the adjustment.
    pub adjusted: ChannelConfig,
    pub propagation: Propagation,
}

/// Knobs of [`generate_scenario_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub area: Area,
    pub n_regions: usize,
    pub c_true: usize,
    pub bs_location: (f64, f64, f64),
    pub n_neighbors: usize,
    /// Secondary path power relative to the dominant one, sampled uniformly.
    pub secondary_ratio: (f64, f64),
    /// Max offset of secondary paths from the dominant angle, degrees (tilt, azimuth).
    pub secondary_spread: (f64, f64),
    pub serving: ChannelConfig,
    pub adjusted: ChannelConfig,
    pub propagation: Propagation,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            area: Area::default(),
            n_regions: 24,
            c_true: 3,
            bs_location: (0.0, 0.0, 30.0),
            n_neighbors: 4,
            secondary_ratio: (0.1, 0.5),
            secondary_spread: (30.0, 30.0),
            serving: ChannelConfig::default_serving(),
            adjusted: ChannelConfig::default_adjusted(),
            propagation: Propagation::default(),
        }
    }
}

impl Scenario {
    /// Index of the region containing `(x, y)`; ties go to the lowest index.
    pub fn region_of(&self, x: f64, y: f64) -> Result<usize> {
        if !self.area.contains(x, y) {
            return Err(Error::OutOfArea { x, y });
        }
        Ok(nearest_site(&self.regions, x, y))
    }

    pub fn digest(&self) -> Result<String> {
        Ok(fnv1a_hex(&serde_json::to_vec(self)?))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.area.validate()?;
        if self.regions.is_empty() {
            return Err(Error::invalid("scenario has no regions"));
        }
        let n_a = self.serving.grid()?.n_a();
        if self.adjusted.grid()?.n_a() != n_a {
            return Err(Error::dims("serving and adjusted channels must share the angular grid"));
        }
        for (k, r) in self.regions.iter().enumerate() {
            if r.aps.is_empty() || r.aps.len() > self.c_true {
                return Err(Error::invalid(format!("region {k} has {} paths, expected 1..={}", r.aps.len(), self.c_true)));
            }
            if r.aps.iter().any(|&(i, p)| i >= n_a || !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::invalid(format!("region {k} has an invalid APS entry")));
            }
        }
        Ok(())
    }
}

fn nearest_site(regions: &[Region], x: f64, y: f64) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, r) in regions.iter().enumerate() {
        let d = (r.site.0 - x).powi(2) + (r.site.1 - y).powi(2);
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Scenario on `area` with `n_regions` regions of at most `c_true` paths each.
pub fn generate_scenario(area: Area, n_regions: usize, c_true: usize, seed: u64) -> Result<Scenario> {
    generate_scenario_with(&ScenarioConfig { area, n_regions, c_true, ..ScenarioConfig::default() }, seed)
}

pub fn generate_scenario_with(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    cfg.area.validate()?;
    if cfg.n_regions == 0 || cfg.c_true == 0 {
        return Err(Error::invalid("n_regions and c_true must be >= 1"));
    }
    let (lo, hi) = cfg.secondary_ratio;
    if !(lo > 0.0 && lo <= hi && hi < 1.0) {
        return Err(Error::invalid("secondary_ratio must satisfy 0 < lo <= hi < 1"));
    }
    let grid = cfg.serving.grid()?;
    if cfg.adjusted.grid()?.n_a() != grid.n_a() {
        return Err(Error::dims("serving and adjusted channels must share the angular grid"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let sites = spread_sites(&cfg.area, cfg.n_regions, &mut rng);
    let centroids = cell_centroids(&cfg.area, &sites);
    let bs = cfg.bs_location;

    let mut regions = Vec::with_capacity(sites.len());
    for (&site, &centroid) in sites.iter().zip(&centroids) {
        let (theta, phi) = relative_angle(&GeometryPrior::new(centroid, bs))?;
        let los = grid.nearest(theta, phi);
        let dist = ((centroid.0 - bs.0).powi(2) + (centroid.1 - bs.1).powi(2) + bs.2 * bs.2).sqrt();
        let dominant = cfg.propagation.path_power(dist);
        let mut aps = vec![(los, dominant)];
        let mut attempts = 0;
        while aps.len() < cfg.c_true && attempts < 1000 {
            attempts += 1;
            let (t0, a0) = grid.angle(los);
            let t = t0 + rng.random_range(-cfg.secondary_spread.0..=cfg.secondary_spread.0);
            let a = a0 + rng.random_range(-cfg.secondary_spread.1..=cfg.secondary_spread.1);
            let idx = grid.nearest(t, a);
            if aps.iter().any(|&(i, _)| i == idx) {
                continue;
            }
            aps.push((idx, dominant * rng.random_range(lo..=hi)));
        }
        regions.push(Region { site, centroid, aps });
    }

    let center = ((cfg.area.x_min + cfg.area.x_max) / 2.0, (cfg.area.y_min + cfg.area.y_max) / 2.0);
    let neighbors = neighbor_ring(&cfg.area, center, cfg.n_neighbors);

    let scenario = Scenario {
        area: cfg.area,
        bs_location: bs,
        serving_cell_id: 1,
        regions,
        neighbors,
        c_true: cfg.c_true,
        rng_seed: seed,
        serving: cfg.serving.clone(),
        adjusted: cfg.adjusted.clone(),
        propagation: cfg.propagation,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Best-candidate sampling: each new site is the farthest of several random candidates.
fn spread_sites(area: &Area, n: usize, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    const CANDIDATES: usize = 16;
    let mut sites: Vec<(f64, f64)> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = area.sample(rng);
        let mut best_d = min_dist2(&sites, best);
        for _ in 1..CANDIDATES {
            let c = area.sample(rng);
            let d = min_dist2(&sites, c);
            if d > best_d {
                best = c;
                best_d = d;
            }
        }
        sites.push(best);
    }
    sites
}

fn min_dist2(sites: &[(f64, f64)], p: (f64, f64)) -> f64 {
    sites.iter().map(|s| (s.0 - p.0).powi(2) + (s.1 - p.1).powi(2)).fold(f64::INFINITY, f64::min)
}

/// Voronoi cell centroids approximated on a regular lattice of the area.
fn cell_centroids(area: &Area, sites: &[(f64, f64)]) -> Vec<(f64, f64)> {
    const LATTICE: usize = 128;
    let regions: Vec<Region> = sites.iter().map(|&s| Region { site: s, centroid: s, aps: Vec::new() }).collect();
    let mut sums = vec![(0.0, 0.0, 0usize); sites.len()];
    for i in 0..LATTICE {
        let x = area.x_min + (i as f64 + 0.5) / LATTICE as f64 * area.width();
        for j in 0..LATTICE {
            let y = area.y_min + (j as f64 + 0.5) / LATTICE as f64 * area.height();
            let k = nearest_site(&regions, x, y);
            sums[k].0 += x;
            sums[k].1 += y;
            sums[k].2 += 1;
        }
    }
    sums.iter()
        .zip(sites)
        .map(|(&(sx, sy, n), &site)| if n == 0 { site } else { (sx / n as f64, sy / n as f64) })
        .collect()
}

/// Neighbor BSs evenly spaced on a ring around the area, each facing its center.
fn neighbor_ring(area: &Area, center: (f64, f64), q: usize) -> Vec<NeighborCell> {
    let radius = 0.5 * area.width().hypot(area.height()) + 150.0;
    (0..q)
        .map(|n| {
            let ang = std::f64::consts::TAU * (n as f64 + 0.5) / q as f64;
            let loc = (center.0 + radius * ang.cos(), center.1 + radius * ang.sin(), 25.0);
            let boresight = (center.1 - loc.1).atan2(center.0 - loc.0).to_degrees();
            NeighborCell { cell_id: 100 + n as u64, location: loc, boresight }
        })
        .collect()
}

/// One measurement-report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrSample {
    /// Seconds.
    pub timestamp: f64,
    pub call_id: u64,
    pub serving_cell_id: u64,
    /// dBm per serving beam; masked beams hold [`MISSING_DBM`].
    pub serving_rsrp: Vec<f64>,
    pub serving_mask: Vec<bool>,
    /// dBm per neighbor cell and beam.
    pub neighbor_rsrp: Vec<Vec<f64>>,
    pub neighbor_mask: Vec<Vec<bool>>,
    pub true_location: Option<(f64, f64)>,
    pub is_labeled: bool,
}

impl MrSample {
    pub fn m(&self) -> usize {
        self.serving_rsrp.len()
    }

    /// Serving beam powers in linear mW, zero where masked.
    pub fn serving_linear(&self) -> Vec<f64> {
        self.serving_rsrp
            .iter()
            .zip(&self.serving_mask)
            .map(|(&v, &ok)| if ok { dbm_to_linear(v) } else { 0.0 })
            .collect()
    }

    /// Serving then neighbor beams in dBm with masked entries filled by the sentinel.
    pub fn stacked_dbm(&self) -> Vec<f64> {
        let fill = |v: &f64, ok: &bool| if *ok { *v } else { MISSING_DBM };
        let mut out: Vec<f64> = self.serving_rsrp.iter().zip(&self.serving_mask).map(|(v, ok)| fill(v, ok)).collect();
        for (vals, mask) in self.neighbor_rsrp.iter().zip(&self.neighbor_mask) {
            out.extend(vals.iter().zip(mask).map(|(v, ok)| fill(v, ok)));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if self.serving_mask.len() != m {
            return Err(Error::dims("serving mask length differs from beam count"));
        }
        if !self.serving_mask.iter().any(|&v| v) {
            return Err(Error::invalid("sample has no valid serving beam"));
        }
        if self.neighbor_rsrp.len() != self.neighbor_mask.len()
            || self.neighbor_rsrp.iter().zip(&self.neighbor_mask).any(|(v, k)| v.len() != m || k.len() != m)
        {
            return Err(Error::dims("neighbor beam arrays must be Q x M"));
        }
        Ok(())
    }
}

/// Angular grid used for region APS indices.
pub fn scenario_grid(scenario: &Scenario) -> Result<AngularGrid> {
    scenario.serving.grid()
}
