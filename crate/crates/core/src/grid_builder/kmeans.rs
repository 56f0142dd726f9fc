use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{valid_residual_norm, GridInputs};
use crate::error::{Error, Result};

/// Weights of the joint clustering distance
/// `rsrp * valid_distance(y, center) + beta * ||p - center_p||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointMetric {
    pub rsrp: f64,
    pub beta: f64,
}

#[derive(Debug, Clone)]
struct Center {
    y: Vec<f64>,
    valid: Vec<bool>,
    p: (f64, f64),
}

fn sample_center(data: &GridInputs, i: usize) -> Center {
    Center { y: data.y[i].clone(), valid: data.mask[i].clone(), p: data.locations[i] }
}

fn mean_center(data: &GridInputs, members: &[usize]) -> Center {
    let m = data.m();
    let mut y = vec![0.0; m];
    let mut counts = vec![0usize; m];
    let (mut px, mut py) = (0.0, 0.0);
    for &i in members {
        for b in 0..m {
            if data.mask[i][b] {
                y[b] += data.y[i][b];
                counts[b] += 1;
            }
        }
        px += data.locations[i].0;
        py += data.locations[i].1;
    }
    for b in 0..m {
        if counts[b] > 0 {
            y[b] /= counts[b] as f64;
        }
    }
    let n = members.len().max(1) as f64;
    Center { y, valid: counts.iter().map(|&c| c > 0).collect(), p: (px / n, py / n) }
}

fn distance(data: &GridInputs, i: usize, c: &Center, metric: JointMetric) -> f64 {
    let mut d = 0.0;
    if metric.rsrp > 0.0 {
        // Beams the center never observed carry no information about the sample.
        let mask: Vec<bool> = data.mask[i].iter().zip(&c.valid).map(|(&a, &b)| a && b).collect();
        d += metric.rsrp * valid_residual_norm(&data.y[i], &data.mask[i], &mask, &c.y);
    }
    if metric.beta > 0.0 {
        let p = data.locations[i];
        d += metric.beta * (p.0 - c.p.0).hypot(p.1 - c.p.1);
    }
    d
}

fn nearest(data: &GridInputs, i: usize, centers: &[Center], metric: JointMetric) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = distance(data, i, c, metric);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd refinement under `metric`.
pub fn kmeans(data: &GridInputs, k: usize, metric: JointMetric, max_iter: usize, seed: u64) -> Result<Vec<usize>> {
    let n = data.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must satisfy 1 <= k <= N = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![sample_center(data, rng.random_range(0..n))];
    let mut chosen = vec![false; n];
    let mut d2: Vec<f64> = (0..n).map(|i| distance(data, i, &centers[0], metric).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // Every sample coincides with a center: take an unused one.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let c = sample_center(data, pick);
        for i in 0..n {
            d2[i] = d2[i].min(distance(data, i, &c, metric).powi(2));
        }
        centers.push(c);
    }

    let mut assignment: Vec<usize> = (0..n).map(|i| nearest(data, i, &centers, metric).0).collect();
    for _ in 0..max_iter {
        fill_empty(data, &mut assignment, &centers, k, metric);
        centers = (0..k)
            .map(|c| mean_center(data, &(0..n).filter(|&i| assignment[i] == c).collect::<Vec<_>>()))
            .collect();
        let next: Vec<usize> = (0..n).map(|i| nearest(data, i, &centers, metric).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    fill_empty(data, &mut assignment, &centers, k, metric);
    Ok(assignment)
}

/// Moves the sample farthest from its own center into each empty cluster.
fn fill_empty(data: &GridInputs, assignment: &mut [usize], centers: &[Center], k: usize, metric: JointMetric) {
    loop {
        let mut sizes = vec![0usize; k];
        assignment.iter().for_each(|&g| sizes[g] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { return };
        let worst = (0..assignment.len())
            .filter(|&i| sizes[assignment[i]] > 1)
            .map(|i| (i, distance(data, i, &centers[assignment[i]], metric)))
            .fold((usize::MAX, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        if worst.0 == usize::MAX {
            return;
        }
        assignment[worst.0] = empty;
    }
}
