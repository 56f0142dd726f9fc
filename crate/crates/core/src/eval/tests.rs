use nalgebra::DMatrix;
use proptest::prelude::*;

use super::*;
use crate::channel_model::MeasurementMatrix;
use crate::grid_builder::{GridModel, MaskedMean};
use crate::sparse::{ApsEstimate, Solver};
use crate::synth::{generate_dataset, generate_scenario, Area, DatasetConfig, MissingPolicy, MrSample};
use crate::units::linear_to_dbm;

fn sample_dbm(dbm: &[f64], mask: &[bool]) -> MrSample {
    MrSample {
        timestamp: 0.0,
        call_id: 1,
        serving_cell_id: 1,
        serving_rsrp: dbm.to_vec(),
        serving_mask: mask.to_vec(),
        neighbor_rsrp: Vec::new(),
        neighbor_mask: Vec::new(),
        true_location: Some((0.0, 0.0)),
        is_labeled: false,
    }
}

#[test]
fn test_assignment_examples() {
    let train = [(0.0, 0.0), (10.0, 0.0)];
    assert_eq!(assign_test_grids(&[(0.0, 0.0)], &train, &[1, 0], 2).unwrap(), vec![1]);
    assert_eq!(assign_test_grids(&[(4.0, 0.0)], &train, &[0, 1], 2).unwrap(), vec![0]);
    assert_eq!(assign_test_grids(&[(5.0, 0.0)], &train, &[1, 0], 2).unwrap(), vec![0]);
    assert_eq!(assign_test_grids(&[(3.0, 9.0), (-50.0, 2.0)], &train, &[0, 0], 1).unwrap(), vec![0, 0]);
    assert!(assign_test_grids(&[(0.0, 0.0)], &[], &[], 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn test_assignment_matches_brute_force(
        train in proptest::collection::vec(((-50.0f64..50.0, -50.0f64..50.0), 0usize..4), 1..30),
        test in proptest::collection::vec((-60.0f64..60.0, -60.0f64..60.0), 1..20),
    ) {
        let locs: Vec<(f64, f64)> = train.iter().map(|t| t.0).collect();
        let labels: Vec<usize> = train.iter().map(|t| t.1).collect();
        let got = assign_test_grids(&test, &locs, &labels, 4).unwrap();
        for (p, &g) in test.iter().zip(&got) {
            let d = |q: &(f64, f64)| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
            let best_k = (0..4)
                .filter_map(|k| {
                    let m = locs.iter().zip(&labels).filter(|(_, &l)| l == k).map(|(q, _)| d(q)).fold(f64::INFINITY, f64::min);
                    m.is_finite().then_some((k, m))
                })
                .fold((usize::MAX, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
            prop_assert_eq!(g, best_k.0);
        }
    }

    #[test]
    fn mae_is_invariant_to_common_scaling(
        vals in proptest::collection::vec((1e-11f64..1e-8, 1e-11f64..1e-8), 1..8),
        factor in 0.01f64..100.0,
    ) {
        let preds = vec![vec![2e-10, 5e-10]];
        let samples: Vec<MrSample> = vals.iter().map(|v| sample_dbm(&[linear_to_dbm(v.0).unwrap(), linear_to_dbm(v.1).unwrap()], &[true, true])).collect();
        let scaled_preds = vec![preds[0].iter().map(|v| v * factor).collect::<Vec<_>>()];
        let scaled: Vec<MrSample> = vals
            .iter()
            .map(|v| sample_dbm(&[linear_to_dbm(v.0 * factor).unwrap(), linear_to_dbm(v.1 * factor).unwrap()], &[true, true]))
            .collect();
        let assign = vec![0; samples.len()];
        let a = masked_mae_db(&preds, &samples, &assign).unwrap().mae_db;
        let b = masked_mae_db(&scaled_preds, &scaled, &assign).unwrap().mae_db;
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn mae_is_invariant_to_order_and_relabeling(
        vals in proptest::collection::vec((-110.0f64..-70.0, -110.0f64..-70.0, 0usize..3), 3..20),
    ) {
        let preds = vec![vec![1e-10, 3e-10], vec![5e-9, 1e-11], vec![2e-11, 2e-11]];
        let samples: Vec<MrSample> = vals.iter().map(|v| sample_dbm(&[v.0, v.1], &[true, v.0 > -100.0])).collect();
        let assign: Vec<usize> = vals.iter().map(|v| v.2).collect();
        let base = masked_mae_db(&preds, &samples, &assign);
        let perm = [2, 0, 1];
        let relabeled: Vec<Vec<f64>> = (0..3).map(|k| preds[perm.iter().position(|&p| p == k).unwrap()].clone()).collect();
        let reassign: Vec<usize> = assign.iter().rev().map(|&g| perm[g]).collect();
        let rev: Vec<MrSample> = samples.iter().rev().cloned().collect();
        let other = masked_mae_db(&relabeled, &rev, &reassign);
        match (base, other) {
            (Ok(x), Ok(y)) => prop_assert!((x.mae_db - y.mae_db).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
        }
    }
}

#[test]
fn mae_examples() {
    let pred = vec![vec![linear_to_dbm_inv(-80.0), linear_to_dbm_inv(-90.0)]];
    let exact = sample_dbm(&[-80.0, -90.0], &[true, true]);
    assert!(masked_mae_db(&pred, &[exact], &[0]).unwrap().mae_db < 1e-9);
    let off = sample_dbm(&[-81.0, -87.0], &[true, true]);
    assert!((masked_mae_db(&pred, &[off], &[0]).unwrap().mae_db - 2.0).abs() < 1e-9);
    let masked = sample_dbm(&[-81.0, -140.0], &[true, false]);
    assert!((masked_mae_db(&pred, &[masked], &[0]).unwrap().mae_db - 1.0).abs() < 1e-9);

    let two = vec![pred[0].clone(), pred[0].clone()];
    let s = sample_dbm(&[-84.0, -90.0], &[true, true]);
    let summary = masked_mae_db(&two, &[s], &[1]).unwrap();
    assert_eq!(summary.per_grid[0], None);
    assert!((summary.mae_db - 2.0).abs() < 1e-9);
    assert!(masked_mae_db(&pred, &[sample_dbm(&[-80.0, -90.0], &[true, true])], &[3]).is_err());
}

fn linear_to_dbm_inv(dbm: f64) -> f64 {
    crate::units::dbm_to_linear(dbm)
}

fn oracle_model(scenario: &crate::synth::Scenario, assignment: Vec<usize>) -> GridModel {
    let n_a = scenario.serving.grid().unwrap().n_a();
    let k = scenario.regions.len();
    GridModel {
        k,
        locations: vec![(0.0, 0.0); assignment.len()],
        assignment,
        centroids: scenario.regions.iter().map(|r| r.centroid).collect(),
        mean_rsrp: vec![MaskedMean { values: Vec::new(), counts: Vec::new() }; k],
        aps: scenario.regions.iter().map(|r| ApsEstimate::from_entries(n_a, &r.aps).unwrap()).collect(),
        beta: 1.0,
        solver: Solver::Gm,
    }
}

#[test]
fn perfect_model_on_noiseless_data_scores_zero() {
    let scenario = generate_scenario(Area::new(20.0, 220.0, -100.0, 100.0).unwrap(), 3, 3, 4).unwrap();
    let cfg = DatasetConfig {
        n_calls: 10,
        samples_per_call: 5,
        n_test_calls: 5,
        shadowing_db: 0.0,
        missing: MissingPolicy::none(),
        ..DatasetConfig::default()
    };
    let data = generate_dataset(&scenario, &cfg, 4).unwrap();
    let region = |s: &MrSample| {
        let p = s.true_location.unwrap();
        scenario.region_of(p.0, p.1).unwrap()
    };
    let model = oracle_model(&scenario, data.train.iter().map(region).collect());
    assert!(train_mae(&model, &data.train, &data.matrix_train).unwrap().mae_db < 1e-9);
    let test_assign: Vec<usize> = data.test.iter().map(region).collect();
    assert!(test_mae(&model, &data.test, &test_assign, &data.matrix_test).unwrap().mae_db < 1e-9);
    let same = test_mae(&model, &data.train, &model.assignment, &data.matrix_train).unwrap();
    assert_eq!(same, train_mae(&model, &data.train, &data.matrix_train).unwrap());
}

#[test]
fn locations_csv_round_trip() {
    let locs = vec![(1.5, -2.25), (100.0, 3.0e-3)];
    let mut buf = Vec::new();
    write_locations_to(&locs, &mut buf).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("sample_index,pred_x,pred_y"));
    assert_eq!(read_locations_from(buf.as_slice()).unwrap(), locs);
    let err = read_locations_from("sample_index,pred_x,pred_y\n0,1,2\n5,1,2\n".as_bytes()).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
}

#[test]
fn median_examples() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    assert_eq!(median(&[]), None);
}

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.scenario.n_regions = 4;
    cfg.scenario.area = Area::new(20.0, 220.0, -100.0, 100.0).unwrap();
    cfg.dataset = DatasetConfig { n_calls: 12, samples_per_call: 8, n_test_calls: 6, ..DatasetConfig::default() };
    cfg.fit.k = 4;
    cfg.fit.c = 3;
    cfg.fit.iterations = 4;
    cfg.hgnn.epochs = 30;
    cfg.hgnn.widths = vec![16, 2];
    cfg
}

#[test]
fn pipeline_is_reproducible_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (d1, d2) = (dir.path().join("a"), dir.path().join("b"));
    let mut cfg = small_config();
    cfg.locations = LocationSource::Hgnn;
    let r1 = run_pipeline(&cfg, Some(&d1)).unwrap();
    let r2 = run_pipeline(&cfg, Some(&d2)).unwrap();
    assert_eq!(r1, r2);
    for f in ["config.json", "scenario.json", "train.csv", "test.csv", "A.bin", "Aprime.bin", "locs.csv", "model.json", "report.json"] {
        assert_eq!(std::fs::read(d1.join(f)).unwrap(), std::fs::read(d2.join(f)).unwrap(), "{f}");
    }
    assert!(r1.mean_distance_error_m.is_some());
    assert!(r1.test_mae_db.is_finite() && r1.test_mae_db >= 0.0);
    assert_eq!(r1.grids.len(), r1.n_grids);
}

#[test]
fn pipeline_errors_name_their_stage() {
    let mut cfg = small_config();
    cfg.fit.k = 10_000;
    let err = run_pipeline(&cfg, None).unwrap_err();
    assert!(err.to_string().contains("`fit`"), "{err}");
    let mut cfg = small_config();
    cfg.scenario.n_regions = 0;
    assert!(run_pipeline(&cfg, None).unwrap_err().to_string().contains("`gen`"));
}

#[test]
fn sweep_shapes() {
    let mut spec = SweepSpec { base: small_config(), ..SweepSpec::default() };
    spec.seeds = vec![1, 2];
    spec.solvers = vec![Solver::Gm, Solver::Nnomp];
    spec.ks = vec![4];
    let rows = sweep(&spec).unwrap();
    assert_eq!(rows.len(), 2 * 4 * 2);
    assert!(rows.iter().all(|r| r.label_fraction.is_none() && r.test_mae_db.is_finite()));

    spec.methods = vec![GridMethod::Joint];
    spec.solvers = vec![Solver::Gm];
    spec.seeds = vec![3];
    spec.location_sources = vec![LocationSource::Hgnn];
    spec.label_fractions = vec![0.01, 0.1, 0.5];
    let rows = sweep(&spec).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.mean_distance_error_m.is_some()));
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    assert_eq!(median_test_mae(&rows).len(), 3);
}

#[test]
fn unknown_names_are_rejected() {
    assert!("grid".parse::<GridMethod>().is_err());
    assert_eq!("kmeans-rsrp".parse::<GridMethod>().unwrap(), GridMethod::KmeansRsrp);
    let _ = MeasurementMatrix::from_matrix(DMatrix::identity(1, 1)).unwrap();
}
