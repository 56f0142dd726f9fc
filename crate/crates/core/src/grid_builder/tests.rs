use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::synth::{generate_dataset, generate_scenario, Area, DatasetConfig, MissingPolicy};
use crate::units::{linear_to_dbm, MISSING_DBM};

fn sample(mw: &[f64], mask: &[bool]) -> MrSample {
    MrSample {
        timestamp: 0.0,
        call_id: 1,
        serving_cell_id: 1,
        serving_rsrp: mw
            .iter()
            .zip(mask)
            .map(|(&v, &ok)| if ok { linear_to_dbm(v).unwrap() } else { MISSING_DBM })
            .collect(),
        serving_mask: mask.to_vec(),
        neighbor_rsrp: Vec::new(),
        neighbor_mask: Vec::new(),
        true_location: None,
        is_labeled: false,
    }
}

fn identity4() -> MeasurementMatrix {
    MeasurementMatrix::from_matrix(DMatrix::identity(4, 4)).unwrap()
}

#[test]
fn valid_distance_examples() {
    let a = identity4();
    let y = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(valid_distance(&y, &[true; 4], &a, &y).unwrap(), 0.0);
    assert_eq!(valid_distance(&y, &[false; 4], &a, &[9.0; 4]).unwrap(), 0.0);
    let x = [4.0, 6.0, 0.0, 0.0];
    let d = valid_distance(&y, &[true, true, false, false], &a, &x).unwrap();
    assert!((d - 2.5).abs() < 1e-12);
    assert!(valid_distance(&y[..3], &[true; 3], &a, &x).is_err());
}

#[test]
fn masked_mean_examples() {
    let s = sample(&[1.0, 2.0, 3.0], &[true; 3]);
    let m = grid_mean_rsrp(&[&s, &s]).unwrap();
    for (v, e) in m.values.iter().zip([1.0, 2.0, 3.0]) {
        assert!((v - e).abs() < 1e-12);
    }
    let a = sample(&[2.0, 1.0], &[true, false]);
    let b = sample(&[7.0, 1.0], &[false, false]);
    let m = grid_mean_rsrp(&[&a, &b]).unwrap();
    assert!((m.values[0] - 2.0).abs() < 1e-12);
    assert_eq!(m.counts, vec![1, 0]);
    assert_eq!(m.mask(), vec![true, false]);
    assert!(grid_mean_rsrp(&[]).is_err());
}

#[test]
fn centroid_examples() {
    assert_eq!(update_centroids(&[0], &[(3.0, 4.0)], 1).unwrap(), vec![(3.0, 4.0)]);
    assert_eq!(update_centroids(&[0, 0], &[(0.0, 0.0), (2.0, 2.0)], 1).unwrap(), vec![(1.0, 1.0)]);
    let locs = [(1.0, 5.0), (2.0, -1.0), (7.0, 0.5)];
    let fwd = update_centroids(&[0, 0, 0], &locs, 1).unwrap();
    let rev = update_centroids(&[0, 0, 0], &[locs[2], locs[0], locs[1]], 1).unwrap();
    assert!((fwd[0].0 - rev[0].0).abs() < 1e-12 && (fwd[0].1 - rev[0].1).abs() < 1e-12);
    assert!(update_centroids(&[0, 0], &[(0.0, 0.0), (1.0, 1.0)], 2).is_err());
}

fn random_inputs(rng: &mut ChaCha8Rng, n: usize, m: usize) -> GridInputs {
    GridInputs {
        y: (0..n).map(|_| (0..m).map(|_| rng.random_range(0.1..5.0)).collect()).collect(),
        mask: (0..n).map(|_| (0..m).map(|_| rng.random_bool(0.8)).collect()).collect(),
        locations: (0..n).map(|_| (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))).collect(),
        power_ref_mw: 1.0,
    }
}

#[test]
fn assignment_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs = random_inputs(&mut rng, 30, 4);
    let preds: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.random_range(0.1..5.0)).collect()).collect();
    let cents: Vec<(f64, f64)> = (0..5).map(|_| (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))).collect();

    assert!(assign_grids(&inputs, &preds[..1], &cents[..1], 1.0).unwrap().iter().all(|&g| g == 0));

    let far = assign_grids(&inputs, &preds, &cents, 1e12).unwrap();
    for (i, &g) in far.iter().enumerate() {
        let p = inputs.locations[i];
        let d = |c: (f64, f64)| (p.0 - c.0).hypot(p.1 - c.1);
        let best = (0..5).min_by(|&a, &b| d(cents[a]).total_cmp(&d(cents[b]))).unwrap();
        assert_eq!(g, best);
    }

    let mut exact = inputs.clone();
    exact.y[7] = preds[3].clone();
    exact.mask[7] = vec![true; 4];
    assert_eq!(assign_grids(&exact, &preds, &cents, 0.0).unwrap()[7], 3);
    assert!(assign_grids(&inputs, &[], &[], 1.0).is_err());
}

fn blobs(seed: u64) -> (Vec<MrSample>, Vec<(f64, f64)>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    let mut locs = Vec::new();
    let mut truth = Vec::new();
    for i in 0..40 {
        let g = i % 2;
        let base = if g == 0 { [8e-10, 1e-11, 3e-11] } else { [1e-11, 6e-10, 2e-10] };
        let y: Vec<f64> = base.iter().map(|v| v * rng.random_range(0.9..1.1)).collect();
        samples.push(sample(&y, &[true; 3]));
        let c = if g == 0 { (50.0, 50.0) } else { (300.0, -80.0) };
        locs.push((c.0 + rng.random_range(-10.0..10.0), c.1 + rng.random_range(-10.0..10.0)));
        truth.push(g);
    }
    (samples, locs, truth)
}

#[test]
fn kmeanspp_examples() {
    let (samples, locs, truth) = blobs(1);
    let own = init_kmeanspp(&samples[..6], &locs[..6], 6, 1.0, 3).unwrap();
    let mut sorted = own.clone();
    sorted.sort();
    assert_eq!(sorted, vec![0, 1, 2, 3, 4, 5]);
    assert!(init_kmeanspp(&samples, &locs, 1, 1.0, 3).unwrap().iter().all(|&g| g == 0));
    assert!(init_kmeanspp(&samples[..3], &locs[..3], 4, 1.0, 3).is_err());

    let mut ok = 0;
    for seed in 0..20 {
        let (samples, locs, truth) = blobs(seed + 100);
        let g = init_kmeanspp(&samples, &locs, 2, 1.0, seed).unwrap();
        if adjusted_rand_index(&g, &truth).unwrap() == 1.0 {
            ok += 1;
        }
    }
    assert!(ok >= 19, "{ok}/20");
    assert_eq!(init_kmeanspp(&samples, &locs, 2, 1.0, 9).unwrap(), init_kmeanspp(&samples, &locs, 2, 1.0, 9).unwrap());
    let _ = truth;
}

#[test]
fn uniform_grid_examples() {
    let locs = [(0.0, 0.0), (3.0, 4.0), (9.0, 1.0)];
    assert_eq!(baseline_uniform_grid(&locs, 100.0).unwrap(), vec![0, 0, 0]);
    let lattice: Vec<(f64, f64)> = (0..5).flat_map(|i| (0..4).map(move |j| (10.0 * i as f64, 10.0 * j as f64))).collect();
    let g = baseline_uniform_grid(&lattice, 10.0).unwrap();
    let mut s = g.clone();
    s.sort();
    s.dedup();
    assert_eq!(s.len(), lattice.len());
    assert!(baseline_uniform_grid(&locs, 0.0).is_err());
}

#[test]
fn kmeans_baselines_split_blobs() {
    let mut rsrp_ok = 0;
    let mut loc_ok = 0;
    for seed in 0..9 {
        let (samples, locs, truth) = blobs(seed + 300);
        rsrp_ok += usize::from(adjusted_rand_index(&baseline_kmeans_rsrp(&samples, 2, seed).unwrap(), &truth).unwrap() == 1.0);
        loc_ok += usize::from(adjusted_rand_index(&baseline_kmeans_location(&locs, 2, seed).unwrap(), &truth).unwrap() == 1.0);
    }
    assert!(rsrp_ok >= 5 && loc_ok >= 5, "{rsrp_ok} {loc_ok}");
}

#[test]
fn adjusted_rand_examples() {
    assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
    assert!(adjusted_rand_index(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap() < 0.0);
    assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
}

fn noiseless_world(n_regions: usize, seed: u64) -> (crate::synth::Scenario, crate::synth::Dataset) {
    let scenario = generate_scenario(Area::new(20.0, 320.0, -150.0, 150.0).unwrap(), n_regions, 3, seed).unwrap();
    let cfg = DatasetConfig {
        n_calls: 40,
        samples_per_call: 10,
        n_test_calls: 4,
        shadowing_db: 0.0,
        missing: MissingPolicy::none(),
        ..DatasetConfig::default()
    };
    let data = generate_dataset(&scenario, &cfg, seed).unwrap();
    (scenario, data)
}

#[test]
fn noiseless_fit_recovers_regions() {
    let (scenario, data) = noiseless_world(4, 11);
    let grid = scenario.serving.grid().unwrap();
    let locs: Vec<(f64, f64)> = data.train.iter().map(|s| s.true_location.unwrap()).collect();
    let truth: Vec<usize> = locs.iter().map(|p| scenario.region_of(p.0, p.1).unwrap()).collect();
    let cfg = FitConfig { k: 4, c: 3, beta: 0.1, ..FitConfig::default() };
    let (model, report) = fit_joint(&data.train, &locs, &data.matrix_train, &grid, scenario.bs_location, &cfg).unwrap();
    let ari = adjusted_rand_index(&model.assignment, &truth).unwrap();
    assert!(ari >= 0.95, "ARI {ari}");
    assert!(report.iterations <= 15);
    assert!(report.objective_trace.iter().all(|t| t.total.is_finite()));
}

#[test]
fn zero_iterations_returns_initialization() {
    let (scenario, data) = noiseless_world(3, 5);
    let grid = scenario.serving.grid().unwrap();
    let locs: Vec<(f64, f64)> = data.train.iter().map(|s| s.true_location.unwrap()).collect();
    let cfg = FitConfig { k: 3, c: 3, iterations: 0, ..FitConfig::default() };
    let (model, report) = fit_joint(&data.train, &locs, &data.matrix_train, &grid, scenario.bs_location, &cfg).unwrap();
    let init = init_kmeanspp(&data.train, &locs, 3, cfg.beta, cfg.seed).unwrap();
    assert_eq!(model.assignment, init);
    assert_eq!(report.iterations, 0);
    assert_eq!(model.aps.len(), 3);
    assert!(model.aps.iter().all(|x| !x.support.is_empty()));
}

#[test]
fn every_iteration_is_stepwise_optimal() {
    let (scenario, data) = noiseless_world(5, 8);
    let grid = scenario.serving.grid().unwrap();
    let locs: Vec<(f64, f64)> = data.train.iter().map(|s| s.true_location.unwrap()).collect();
    let cfg = FitConfig { k: 6, c: 3, iterations: 6, ..FitConfig::default() };
    let mut seen = 0;
    fit_joint_observed(&data.train, &locs, &data.matrix_train, &grid, scenario.bs_location, &cfg, |s| {
        seen += 1;
        for i in 0..s.inputs.len() {
            let own = assignment_criterion(s.inputs, i, &s.predictions[s.argmin[i]], s.centroids_before[s.argmin[i]], cfg.beta);
            for k in 0..cfg.k {
                assert!(own <= assignment_criterion(s.inputs, i, &s.predictions[k], s.centroids_before[k], cfg.beta));
            }
        }
        let mut counts = vec![0; cfg.k];
        s.assignment.iter().for_each(|&g| counts[g] += 1);
        assert!(counts.iter().all(|&c| c > 0));
        for (k, &c) in s.centroids_after.iter().enumerate() {
            let cost = |p: (f64, f64)| -> f64 {
                (0..s.assignment.len())
                    .filter(|&i| s.assignment[i] == k)
                    .map(|i| (s.inputs.locations[i].0 - p.0).powi(2) + (s.inputs.locations[i].1 - p.1).powi(2))
                    .sum()
            };
            for d in [(0.5, 0.0), (-0.5, 0.0), (0.0, 0.5), (0.0, -0.5)] {
                assert!(cost(c) <= cost((c.0 + d.0, c.1 + d.1)));
            }
        }
    })
    .unwrap();
    assert!(seen >= 1);
}

#[test]
fn model_file_round_trip() {
    let (scenario, data) = noiseless_world(3, 2);
    let grid = scenario.serving.grid().unwrap();
    let locs: Vec<(f64, f64)> = data.train.iter().map(|s| s.true_location.unwrap()).collect();
    let cfg = FitConfig { k: 3, c: 3, iterations: 2, ..FitConfig::default() };
    let (model, report) = fit_joint(&data.train, &locs, &data.matrix_train, &grid, scenario.bs_location, &cfg).unwrap();
    let text = serde_json::to_string(&model.to_file(Some(&report))).unwrap();
    let (back, rep) = serde_json::from_str::<ModelFile>(&text).unwrap().into_model().unwrap();
    assert_eq!(back.assignment, model.assignment);
    assert_eq!(back.centroids, model.centroids);
    for (b, m) in back.aps.iter().zip(&model.aps) {
        assert_eq!(b.x, m.x);
    }
    assert_eq!(rep.unwrap(), report);
}

#[test]
fn fixed_partition_renumbers_labels() {
    let (scenario, data) = noiseless_world(3, 4);
    let grid = scenario.serving.grid().unwrap();
    let locs: Vec<(f64, f64)> = data.train.iter().map(|s| s.true_location.unwrap()).collect();
    let labels: Vec<usize> = (0..locs.len()).map(|i| if i % 2 == 0 { 7 } else { 3 }).collect();
    let cfg = FitConfig { solver: Solver::Wnomp, c: 3, ..FitConfig::default() };
    let model = fit_fixed(&data.train, &locs, &labels, &data.matrix_train, &grid, scenario.bs_location, &cfg).unwrap();
    assert_eq!(model.k, 2);
    assert_eq!(model.assignment[0], 1);
    assert_eq!(model.assignment[1], 0);
}

/// `sum_k 1/|G_k| sum_i ||A x_k - y_i||^2` minus the same with `x'`, and the mean form.
fn mean_form_gap(a: &DMatrix<f64>, groups: &[Vec<Vec<f64>>], x: &[Vec<f64>], xp: &[Vec<f64>]) -> (f64, f64) {
    let pred = |v: &[f64]| a * nalgebra::DVector::from_column_slice(v);
    let sq = |p: &nalgebra::DVector<f64>, y: &[f64]| p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for (k, g) in groups.iter().enumerate() {
        let (p, pp) = (pred(&x[k]), pred(&xp[k]));
        let n = g.len() as f64;
        lhs += g.iter().map(|y| sq(&p, y) - sq(&pp, y)).sum::<f64>() / n;
        let mean: Vec<f64> = (0..a.nrows()).map(|r| g.iter().map(|y| y[r]).sum::<f64>() / n).collect();
        rhs += sq(&p, &mean) - sq(&pp, &mean);
    }
    (lhs, rhs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_mean_form_matches_per_sample_form(seed in any::<u64>(), m in 1usize..=10, n_a in 1usize..=50, k in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(m, n_a, |_, _| rng.random_range(0.0..1.0));
        let groups: Vec<Vec<Vec<f64>>> = (0..k)
            .map(|_| (0..rng.random_range(1..8)).map(|_| (0..m).map(|_| rng.random_range(0.0..3.0)).collect()).collect())
            .collect();
        let mut vecs = || (0..k).map(|_| (0..n_a).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<f64>>()).collect::<Vec<_>>();
        let (x, xp) = (vecs(), vecs());
        let (lhs, rhs) = mean_form_gap(&a, &groups, &x, &xp);
        prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()).max(1e-12));
    }

    #[test]
    fn masked_mean_equals_plain_mean_without_gaps(vals in proptest::collection::vec(proptest::collection::vec(1e-12f64..1e-8, 3), 1..10)) {
        let samples: Vec<MrSample> = vals.iter().map(|v| sample(v, &[true; 3])).collect();
        let refs: Vec<&MrSample> = samples.iter().collect();
        let m = grid_mean_rsrp(&refs).unwrap();
        for b in 0..3 {
            let plain = samples.iter().map(|s| s.serving_linear()[b]).sum::<f64>() / samples.len() as f64;
            prop_assert!((m.values[b] - plain).abs() <= 1e-12 * plain);
        }
    }
}
