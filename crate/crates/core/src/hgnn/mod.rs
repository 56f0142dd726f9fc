//! Semi-supervised localization of MR samples with a hypergraph convolution network.
//!
//! Every sample is a vertex. Two hyperedge families connect it to its nearest
//! neighbors in beam space and to the reports of the same call within a short time
//! window. A stack of hypergraph convolutions maps standardized RSRP features to a
//! planar location; only labeled vertices enter the loss.
//!
//! Features and outputs are feature-major: a `d x n` matrix holds one column per vertex.

mod hypergraph;
mod network;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::MrSample;

pub use hypergraph::{
    beam_hyperedges_from_vectors, beam_space_distance, build_beam_hyperedges, build_temporal_hyperedges,
    temporal_hyperedges_from_calls, EdgeKind, HypergraphIncidence,
};
pub use network::{
    hgnn_forward, hgnn_loss, loss_and_gradients, predict, sigmoid, train, Activation, Gradients, HgnnParams,
    OptimizerConfig, TrainOutput, LEAKY_SLOPE,
};

/// Hypergraph construction and training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Mix between Euclidean and cosine beam-space distance.
    pub gamma: f64,
    /// Beam-space neighbors per vertex.
    pub k: usize,
    /// Temporal window, seconds.
    pub tau: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
    pub label_fraction: f64,
    /// Widths after the input layer; the last must be 2.
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.5,
            k: 8,
            tau: 3.0,
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 2000,
            seed: 7,
            label_fraction: 0.1,
            widths: vec![200, 1000, 2],
            activation: Activation::LeakyRelu,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid("gamma must lie in [0, 1]"));
        }
        if self.k == 0 || !(self.tau > 0.0) {
            return Err(Error::invalid("k must be >= 1 and tau > 0"));
        }
        if self.widths.last() != Some(&2) {
            return Err(Error::invalid("the last layer width must be 2"));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig { learning_rate: self.learning_rate, momentum: self.momentum, epochs: self.epochs }
    }
}

/// Stacked dBm vectors as a `d x n` matrix, each row scaled to zero mean and unit variance.
pub fn standardized_features(samples: &[MrSample]) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = samples.iter().map(MrSample::stacked_dbm).collect();
    let d = rows.first().map(Vec::len).ok_or_else(|| Error::invalid("no samples"))?;
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::dims("samples have different beam counts"));
    }
    let n = rows.len();
    let mut x = DMatrix::from_fn(d, n, |i, j| rows[j][i]);
    for mut row in x.row_iter_mut() {
        let mean = row.sum() / n as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        row.apply(|v| *v = (*v - mean) / sd);
    }
    Ok(x)
}

/// Predicted locations of every sample plus the training record.
#[derive(Debug, Clone)]
pub struct Localization {
    pub predictions: Vec<(f64, f64)>,
    pub loss_trace: Vec<f64>,
    pub params: HgnnParams,
}

/// Builds the hypergraph over all samples, trains on the labeled ones and predicts all.
///
/// Labels are centered on the labeled centroid and divided by their RMS radius; predictions
/// are mapped back to meters.
pub fn localize(samples: &[MrSample], labeled: &[bool], cfg: &TrainConfig) -> Result<Localization> {
    cfg.validate()?;
    if labeled.len() != samples.len() {
        return Err(Error::dims("labeled flags must match the sample count"));
    }
    let idx: Vec<usize> = (0..samples.len()).filter(|&i| labeled[i]).collect();
    if idx.is_empty() {
        return Err(Error::invalid("at least one labeled sample is required"));
    }
    let locs: Vec<(f64, f64)> = idx
        .iter()
        .map(|&i| samples[i].true_location.ok_or_else(|| Error::invalid(format!("labeled sample {i} has no location"))))
        .collect::<Result<_>>()?;
    let cx = locs.iter().map(|p| p.0).sum::<f64>() / locs.len() as f64;
    let cy = locs.iter().map(|p| p.1).sum::<f64>() / locs.len() as f64;
    let rms = (locs.iter().map(|p| (p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sum::<f64>() / locs.len() as f64).sqrt();
    let scale = if rms > 0.0 { rms } else { 1.0 };

    let mut labels = DMatrix::zeros(2, samples.len());
    for (&i, p) in idx.iter().zip(&locs) {
        labels[(0, i)] = (p.0 - cx) / scale;
        labels[(1, i)] = (p.1 - cy) / scale;
    }
    let features = standardized_features(samples)?;
    let h = HypergraphIncidence::from_samples(samples, cfg.k, cfg.gamma, cfg.tau)?;
    let mut widths = vec![features.nrows()];
    widths.extend(&cfg.widths);
    let init = HgnnParams::init(&widths, cfg.activation, cfg.seed)?;
    let out = train(&h, &features, &labels, &idx, init, &cfg.optimizer())?;
    let pred = predict(&h, &features, &out.params)?;
    let predictions = pred.column_iter().map(|c| (c[0] * scale + cx, c[1] * scale + cy)).collect();
    Ok(Localization { predictions, loss_trace: out.loss_trace, params: out.params })
}

/// `(1/|I|) * sum_{i in I} ||pred_i - truth_i||`.
pub fn mean_distance_error(pred: &[(f64, f64)], truth: &[(f64, f64)], index: &[usize]) -> Result<f64> {
    if index.is_empty() {
        return Err(Error::invalid("index set must be non-empty"));
    }
    if pred.len() != truth.len() {
        return Err(Error::dims("prediction and truth lengths differ"));
    }
    let mut sum = 0.0;
    for &i in index {
        if i >= pred.len() {
            return Err(Error::invalid(format!("index {i} out of range")));
        }
        sum += (pred[i].0 - truth[i].0).hypot(pred[i].1 - truth[i].1);
    }
    Ok(sum / index.len() as f64)
}

/// Mean location of the `k` labeled samples nearest to each query in beam space.
pub fn knn_baseline(labeled: &[MrSample], queries: &[MrSample], k: usize, gamma: f64) -> Result<Vec<(f64, f64)>> {
    if k == 0 || labeled.len() < k {
        return Err(Error::invalid(format!("need at least k = {k} >= 1 labeled samples, got {}", labeled.len())));
    }
    let locs: Vec<(f64, f64)> = labeled
        .iter()
        .map(|s| s.true_location.ok_or_else(|| Error::invalid("labeled sample without a location")))
        .collect::<Result<_>>()?;
    let pool: Vec<Vec<f64>> = labeled.iter().map(MrSample::stacked_dbm).collect();
    queries
        .iter()
        .map(|q| {
            let nn = hypergraph::nearest_k(&q.stacked_dbm(), &pool, k, gamma, None)?;
            let (sx, sy) = nn.iter().fold((0.0, 0.0), |(sx, sy), &j| (sx + locs[j].0, sy + locs[j].1));
            Ok((sx / k as f64, sy / k as f64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(rsrp: &[f64], call: u64, t: f64, loc: (f64, f64)) -> MrSample {
        MrSample {
            timestamp: t,
            call_id: call,
            serving_cell_id: 1,
            serving_rsrp: rsrp.to_vec(),
            serving_mask: vec![true; rsrp.len()],
            neighbor_rsrp: Vec::new(),
            neighbor_mask: Vec::new(),
            true_location: Some(loc),
            is_labeled: true,
        }
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> HypergraphIncidence {
        let beam: Vec<Vec<usize>> = (0..n)
            .map(|v| {
                let mut e = vec![v];
                for _ in 0..rng.random_range(0..3) {
                    e.push(rng.random_range(0..n));
                }
                e
            })
            .collect();
        let time: Vec<Vec<usize>> =
            (0..rng.random_range(0..n)).map(|_| (0..rng.random_range(1..4)).map(|_| rng.random_range(0..n)).collect()).collect();
        HypergraphIncidence::new(n, beam, time).unwrap()
    }

    #[test]
    fn single_self_edge_halves_input() {
        let h = HypergraphIncidence::new(1, vec![vec![0]], vec![]).unwrap();
        let params =
            HgnnParams { thetas: vec![DMatrix::identity(2, 2)], w1: 0.0, w2: 0.0, activation: Activation::Identity };
        let x = DMatrix::from_column_slice(2, 1, &[3.0, -8.0]);
        assert_eq!(hgnn_forward(&h, &x, &params).unwrap(), x * 0.5);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_graph(&mut rng, 6);
        let params = HgnnParams::init(&[3, 5, 4, 2], Activation::LeakyRelu, 2).unwrap();
        assert!(hgnn_forward(&h, &DMatrix::zeros(3, 6), &params).unwrap().iter().all(|&v| v == 0.0));
        assert!(hgnn_forward(&h, &DMatrix::zeros(4, 6), &params).is_err());
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 9;
        let h = random_graph(&mut rng, n);
        let x = DMatrix::from_fn(3, n, |_, _| rng.random_range(-1.0..1.0));
        let params = HgnnParams::init(&[3, 6, 2], Activation::LeakyRelu, 3).unwrap();
        let base = hgnn_forward(&h, &x, &params).unwrap();

        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        perm.swap(0, 4);
        // perm[old] = new position.
        let map = |e: &Vec<usize>| e.iter().map(|&v| perm[v]).collect::<Vec<_>>();
        let hp = HypergraphIncidence::new(
            n,
            h.edges_beam().iter().map(map).collect(),
            h.edges_time().iter().map(map).collect(),
        )
        .unwrap();
        let mut xp = DMatrix::zeros(3, n);
        for v in 0..n {
            xp.set_column(perm[v], &x.column(v));
        }
        let out = hgnn_forward(&hp, &xp, &params).unwrap();
        for v in 0..n {
            assert_eq!(out.column(perm[v]), base.column(v));
        }
    }

    #[test]
    fn loss_examples() {
        let labels = DMatrix::from_column_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 5.0, 5.0]);
        assert_eq!(hgnn_loss(&labels, &labels, &[0, 1, 2]).unwrap(), 0.0);
        let mut pred = labels.clone();
        pred[(0, 0)] += 3.0;
        pred[(1, 0)] += 4.0;
        assert_eq!(hgnn_loss(&pred, &labels, &[0]).unwrap(), 25.0);
        assert_eq!(hgnn_loss(&pred, &labels, &[0, 1]).unwrap(), 12.5);
        // Unlabeled vertex 2 is ignored.
        pred[(0, 2)] = 1e6;
        assert_eq!(hgnn_loss(&pred, &labels, &[0, 1]).unwrap(), 12.5);
        assert!(hgnn_loss(&pred, &labels, &[]).is_err());
    }

    fn finite_difference_check(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=12);
        let h = random_graph(&mut rng, n);
        let depth = rng.random_range(1..=3);
        let mut widths: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=5)).collect();
        widths.push(2);
        let mut params = HgnnParams::init(&widths, Activation::Tanh, seed).unwrap();
        params.w1 = rng.random_range(-1.0..1.0);
        params.w2 = rng.random_range(-1.0..1.0);
        let x = DMatrix::from_fn(widths[0], n, |_, _| rng.random_range(-2.0..2.0));
        let y = DMatrix::from_fn(2, n, |_, _| rng.random_range(-2.0..2.0));
        let labeled: Vec<usize> = (0..n).filter(|&i| i == 0 || rng.random_bool(0.6)).collect();
        let (_, grad) = loss_and_gradients(&h, &x, &y, &labeled, &params).unwrap();
        let analytic = grad.flatten();
        let flat = params.flatten();
        let mut worst: f64 = 0.0;
        for i in 0..flat.len() {
            let step = 1e-6;
            let mut plus = flat.clone();
            plus[i] += step;
            let mut minus = flat.clone();
            minus[i] -= step;
            let lp = hgnn_loss(&hgnn_forward(&h, &x, &params.unflatten_like(&plus).unwrap()).unwrap(), &y, &labeled).unwrap();
            let lm = hgnn_loss(&hgnn_forward(&h, &x, &params.unflatten_like(&minus).unwrap()).unwrap(), &y, &labeled).unwrap();
            let numeric = (lp - lm) / (2.0 * step);
            let err = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-3);
            worst = worst.max(err);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..10 {
            let err = finite_difference_check(seed);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn learning_rate_zero_keeps_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_graph(&mut rng, 8);
        let x = DMatrix::from_fn(3, 8, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(2, 8, |_, _| rng.random_range(-1.0..1.0));
        let init = HgnnParams::init(&[3, 4, 2], Activation::LeakyRelu, 1).unwrap();
        let opt = OptimizerConfig { learning_rate: 0.0, momentum: 0.9, epochs: 5 };
        let out = train(&h, &x, &y, &[0, 3], init.clone(), &opt).unwrap();
        assert_eq!(out.params, init);
        let again = train(&h, &x, &y, &[0, 3], init, &OptimizerConfig { learning_rate: 0.01, ..opt }).unwrap();
        let init = HgnnParams::init(&[3, 4, 2], Activation::LeakyRelu, 1).unwrap();
        let twice = train(&h, &x, &y, &[0, 3], init, &OptimizerConfig { learning_rate: 0.01, ..opt }).unwrap();
        assert_eq!(again.loss_trace, twice.loss_trace);
    }

    #[test]
    fn linear_targets_are_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 10;
        let h = random_graph(&mut rng, n);
        let x = DMatrix::from_fn(3, n, |_, _| rng.random_range(-1.0..1.0));
        let target = HgnnParams {
            thetas: vec![DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0))],
            w1: 0.0,
            w2: 0.0,
            activation: Activation::Identity,
        };
        let y = hgnn_forward(&h, &x, &target).unwrap();
        let labeled: Vec<usize> = (0..n).collect();
        let init = HgnnParams::init(&[3, 2], Activation::Identity, 5).unwrap();
        let opt = OptimizerConfig { learning_rate: 0.05, momentum: 0.9, epochs: 5000 };
        let out = train(&h, &x, &y, &labeled, init, &opt).unwrap();
        let final_loss = hgnn_loss(&predict(&h, &x, &out.params).unwrap(), &y, &labeled).unwrap();
        assert!(final_loss < 1e-4, "{final_loss}");
        assert!(out.loss_trace.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn small_step_descent_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_graph(&mut rng, 12);
        let x = DMatrix::from_fn(4, 12, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(2, 12, |_, _| rng.random_range(-1.0..1.0));
        let init = HgnnParams::init(&[4, 5, 5, 2], Activation::LeakyRelu, 2).unwrap();
        let opt = OptimizerConfig { learning_rate: 1e-5, momentum: 0.0, epochs: 10 };
        let out = train(&h, &x, &y, &[0, 2, 5, 7], init, &opt).unwrap();
        for w in out.loss_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h = random_graph(&mut rng, 6);
        let x = DMatrix::from_fn(3, 6, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(2, 6, |_, _| rng.random_range(-1.0..1.0) * 100.0);
        let init = HgnnParams::init(&[3, 5, 2], Activation::Identity, 2).unwrap();
        let opt = OptimizerConfig { learning_rate: 1e3, momentum: 0.0, epochs: 500 };
        assert!(matches!(train(&h, &x, &y, &[0, 1, 2], init, &opt), Err(Error::Divergence { .. })));
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = HgnnParams::init(&[4, 3, 2], Activation::Tanh, 3).unwrap();
        let (bytes, meta) = p.to_checkpoint().unwrap();
        assert_eq!(HgnnParams::from_checkpoint(&bytes, &meta).unwrap(), p);
        assert!(HgnnParams::from_checkpoint(&bytes[..8], &meta).is_err());
    }

    #[test]
    fn distance_error_examples() {
        let truth = [(0.0, 0.0), (1.0, 1.0)];
        assert_eq!(mean_distance_error(&truth, &truth, &[0, 1]).unwrap(), 0.0);
        assert_eq!(mean_distance_error(&[(3.0, 4.0), (1.0, 1.0)], &truth, &[0]).unwrap(), 5.0);
        assert_eq!(mean_distance_error(&[(3.0, 4.0), (1.0, 16.0)], &truth, &[0, 1]).unwrap(), 10.0);
        assert!(mean_distance_error(&truth, &truth, &[]).is_err());
    }

    #[test]
    fn knn_examples() {
        let labeled = vec![
            sample(&[-70.0, -80.0], 1, 0.0, (0.0, 0.0)),
            sample(&[-75.0, -80.0], 1, 1.0, (10.0, 0.0)),
            sample(&[-90.0, -80.0], 1, 2.0, (20.0, 0.0)),
        ];
        let q = knn_baseline(&labeled, &labeled[1..2], 1, 0.5).unwrap();
        assert_eq!(q, vec![(10.0, 0.0)]);
        let q = knn_baseline(&labeled, &[sample(&[-71.0, -80.0], 2, 0.0, (0.0, 0.0))], 3, 0.5).unwrap();
        assert_eq!(q, vec![(10.0, 0.0)]);
        let q = knn_baseline(&labeled, &[sample(&[-71.0, -80.0], 2, 0.0, (0.0, 0.0))], 2, 1.0).unwrap();
        assert_eq!(q, vec![(5.0, 0.0)]);
        assert!(knn_baseline(&labeled, &labeled, 4, 0.5).is_err());
    }

    #[test]
    fn localize_runs_end_to_end() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let samples: Vec<MrSample> = (0..60)
            .map(|i| {
                let (x, y) = (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
                sample(&[-60.0 - 0.3 * x, -60.0 - 0.3 * y, -80.0 - 0.1 * (x + y)], (i / 10) as u64, (i % 10) as f64, (x, y))
            })
            .collect();
        let labeled: Vec<bool> = (0..60).map(|i| i % 3 == 0).collect();
        let cfg = TrainConfig { widths: vec![16, 2], epochs: 300, k: 4, ..Default::default() };
        let a = localize(&samples, &labeled, &cfg).unwrap();
        let b = localize(&samples, &labeled, &cfg).unwrap();
        assert_eq!(a.predictions, b.predictions);
        assert!(a.loss_trace.last().unwrap() < &a.loss_trace[0]);
        let truth: Vec<(f64, f64)> = samples.iter().map(|s| s.true_location.unwrap()).collect();
        let unlabeled: Vec<usize> = (0..60).filter(|&i| !labeled[i]).collect();
        let err = mean_distance_error(&a.predictions, &truth, &unlabeled).unwrap();
        assert!(err < 40.0, "{err}");
    }
}
