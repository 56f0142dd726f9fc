use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{MrSample, Scenario};
use crate::channel_model::{beam_gains, expected_rsrp, wrap_degrees, MeasurementMatrix};
use crate::error::{Error, Result};
use crate::units::{linear_to_dbm_floored, MISSING_DBM};

/// Report positions of one call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub call_id: u64,
    pub points: Vec<TrackPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Independent RNG stream `stream` of `seed`.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random-waypoint walks, one per call, starting at uniformly random times within a day.
pub fn simulate_trajectories(
    scenario: &Scenario,
    n_calls: usize,
    samples_per_call: usize,
    speed: f64,
    report_period: f64,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if n_calls == 0 || samples_per_call == 0 {
        return Err(Error::invalid("n_calls and samples_per_call must be >= 1"));
    }
    if !(speed >= 0.0) || !(report_period > 0.0) {
        return Err(Error::invalid("speed must be >= 0 and report_period > 0"));
    }
    let area = scenario.area;
    Ok((0..n_calls)
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let t0 = rng.random_range(0.0..86_400.0);
            let (mut x, mut y) = area.sample(&mut rng);
            let mut target = area.sample(&mut rng);
            let step = speed * report_period;
            let mut points = Vec::with_capacity(samples_per_call);
            for s in 0..samples_per_call {
                if s > 0 {
                    let (dx, dy) = (target.0 - x, target.1 - y);
                    let dist = dx.hypot(dy);
                    if dist <= step {
                        (x, y) = target;
                        target = area.sample(&mut rng);
                    } else {
                        x += dx / dist * step;
                        y += dy / dist * step;
                    }
                }
                points.push(TrackPoint { t: t0 + s as f64 * report_period, x, y });
            }
            Trajectory { call_id: c as u64 + 1, points }
        })
        .collect())
}

/// Rules for dropping beams from a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissingPolicy {
    pub threshold_dbm: f64,
    /// Drop probability for beams below the threshold.
    pub p_weak: f64,
    /// Drop probability for serving beams at or above the threshold.
    pub p_random: f64,
    /// Drop probability for neighbor beams at or above the threshold.
    pub p_neighbor: f64,
}

impl Default for MissingPolicy {
    fn default() -> Self {
        MissingPolicy { threshold_dbm: -110.0, p_weak: 0.5, p_random: 0.02, p_neighbor: 0.2 }
    }
}

impl MissingPolicy {
    pub fn none() -> Self {
        MissingPolicy { threshold_dbm: MISSING_DBM, p_weak: 0.0, p_random: 0.0, p_neighbor: 0.0 }
    }

    fn validate(&self) -> Result<()> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !(ok(self.p_weak) && ok(self.p_random) && ok(self.p_neighbor)) {
            return Err(Error::invalid("drop probabilities must lie in [0, 1]"));
        }
        Ok(())
    }

    fn drop(&self, dbm: f64, p_strong: f64, rng: &mut impl Rng) -> bool {
        let p = if dbm < self.threshold_dbm { self.p_weak } else { p_strong };
        p > 0.0 && rng.random_bool(p)
    }
}

/// Renders one MR sample per trajectory point with serving matrix `a`.
pub fn render_samples(
    scenario: &Scenario,
    trajectories: &[Trajectory],
    a: &MeasurementMatrix,
    shadowing_db: f64,
    missing: &MissingPolicy,
    seed: u64,
) -> Result<Vec<MrSample>> {
    if !(shadowing_db >= 0.0) || !shadowing_db.is_finite() {
        return Err(Error::invalid("shadowing sigma must be finite and >= 0"));
    }
    missing.validate()?;
    let n_a = a.n_a();
    let region_power: Vec<Vec<f64>> =
        scenario.regions.iter().map(|r| expected_rsrp(a, &r.dense_aps(n_a))).collect::<Result<_>>()?;
    let antenna = &scenario.serving.antenna;
    let codebook = scenario.serving.codebook()?;
    let noise = Normal::new(0.0, shadowing_db).map_err(|e| Error::invalid(e.to_string()))?;

    let mut out = Vec::new();
    for (c, traj) in trajectories.iter().enumerate() {
        let mut rng = stream_rng(seed, c as u64);
        for p in &traj.points {
            let region = scenario.region_of(p.x, p.y)?;
            let mut shadow = |v: f64| linear_to_dbm_floored(v) + noise.sample(&mut rng);
            let serving_db: Vec<f64> = region_power[region].iter().map(|&v| shadow(v)).collect();
            let neighbor_db: Vec<Vec<f64>> = scenario
                .neighbors
                .iter()
                .map(|n| {
                    let (dx, dy) = (p.x - n.location.0, p.y - n.location.1);
                    let planar = dx.hypot(dy);
                    let bearing = wrap_degrees(dy.atan2(dx).to_degrees() - n.boresight);
                    let elevation = n.location.2.atan2(planar).to_degrees();
                    let power = scenario.propagation.path_power(planar.hypot(n.location.2));
                    beam_gains(antenna, &codebook, bearing, elevation).into_iter().map(|g| shadow(g * power)).collect()
                })
                .collect();

            let strongest = (0..serving_db.len())
                .fold(0, |best, i| if serving_db[i] > serving_db[best] { i } else { best });
            let mut serving_mask: Vec<bool> = serving_db
                .iter()
                .map(|&v| v > MISSING_DBM && !missing.drop(v, missing.p_random, &mut rng))
                .collect();
            serving_mask[strongest] = true;
            let neighbor_mask: Vec<Vec<bool>> = neighbor_db
                .iter()
                .map(|beams| {
                    beams.iter().map(|&v| v > MISSING_DBM && !missing.drop(v, missing.p_neighbor, &mut rng)).collect()
                })
                .collect();

            let fill = |vals: &[f64], mask: &[bool]| -> Vec<f64> {
                vals.iter().zip(mask).map(|(&v, &ok)| if ok { v.max(MISSING_DBM) } else { MISSING_DBM }).collect()
            };
            out.push(MrSample {
                timestamp: p.t,
                call_id: traj.call_id,
                serving_cell_id: scenario.serving_cell_id,
                serving_rsrp: fill(&serving_db, &serving_mask),
                neighbor_rsrp: neighbor_db.iter().zip(&neighbor_mask).map(|(v, m)| fill(v, m)).collect(),
                serving_mask,
                neighbor_mask,
                true_location: Some((p.x, p.y)),
                is_labeled: false,
            });
        }
    }
    Ok(out)
}

/// Marks `max(1, round(fraction * n))` samples as labeled, chosen uniformly by `seed`.
pub fn select_labeled(n: usize, fraction: f64, seed: u64) -> Result<Vec<bool>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("label fraction must lie in (0, 1], got {fraction}")));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let count = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut rng = stream_rng(seed, u64::MAX);
    let mut labeled = vec![false; n];
    for i in sample(&mut rng, n, count) {
        labeled[i] = true;
    }
    Ok(labeled)
}

/// Dataset generation knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_calls: usize,
    pub samples_per_call: usize,
    pub n_test_calls: usize,
    /// m/s.
    pub speed: f64,
    /// Seconds between consecutive reports.
    pub report_period: f64,
    pub shadowing_db: f64,
    pub missing: MissingPolicy,
    pub label_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_calls: 100,
            samples_per_call: 20,
            n_test_calls: 50,
            speed: 1.5,
            report_period: 1.0,
            shadowing_db: 4.0,
            missing: MissingPolicy::default(),
            label_fraction: 0.1,
        }
    }
}

/// Training reports under the original codebook and test reports under the adjusted one.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<MrSample>,
    pub test: Vec<MrSample>,
    pub matrix_train: MeasurementMatrix,
    pub matrix_test: MeasurementMatrix,
    pub scenario_digest: String,
}

/// Test calls get ids after all training calls so the two sets never share a call.
pub fn generate_dataset(scenario: &Scenario, cfg: &DatasetConfig, seed: u64) -> Result<Dataset> {
    let (_, a) = scenario.serving.build()?;
    let (_, a_prime) = scenario.adjusted.build()?;
    generate_dataset_with(scenario, cfg, &a, &a_prime, seed)
}

/// As [`generate_dataset`] with prebuilt serving and adjusted matrices.
pub fn generate_dataset_with(
    scenario: &Scenario,
    cfg: &DatasetConfig,
    a: &MeasurementMatrix,
    a_prime: &MeasurementMatrix,
    seed: u64,
) -> Result<Dataset> {
    let train_traj =
        simulate_trajectories(scenario, cfg.n_calls, cfg.samples_per_call, cfg.speed, cfg.report_period, seed)?;
    let mut test_traj = simulate_trajectories(
        scenario,
        cfg.n_test_calls,
        cfg.samples_per_call,
        cfg.speed,
        cfg.report_period,
        seed ^ 0x7e57_7e57,
    )?;
    for t in &mut test_traj {
        t.call_id += cfg.n_calls as u64;
    }
    let mut train = render_samples(scenario, &train_traj, a, cfg.shadowing_db, &cfg.missing, seed.wrapping_add(1))?;
    let test = render_samples(scenario, &test_traj, a_prime, cfg.shadowing_db, &cfg.missing, seed.wrapping_add(2))?;
    let labeled = select_labeled(train.len(), cfg.label_fraction, seed)?;
    for (s, l) in train.iter_mut().zip(labeled) {
        s.is_labeled = l;
    }
    Ok(Dataset {
        train,
        test,
        matrix_train: a.clone(),
        matrix_test: a_prime.clone(),
        scenario_digest: scenario.digest()?,
    })
}
