//! Nonnegative least squares with an upper bound on unobserved rows.
//!
//! Solves
//!
//! ```text
//! minimize ||A_obs z - y_obs||^2   subject to  z >= 0,  A_miss z <= y_min
//! ```
//!
//! with a primal active-set method. `z = 0` is always feasible, so the method
//! starts there with every bound active. Equality-constrained subproblems are
//! solved as least-squares problems in the null space of the active general
//! constraints, which keeps rank-deficient (closely parallel) columns stable.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Tolerance used after rescaling the problem to unit column norms and unit data scale.
const TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub z: Vec<f64>,
    pub iterations: usize,
    /// Norm of the projected stationarity residual relative to `||A_obs^T y_obs||`.
    pub kkt_residual: f64,
}

/// Solves the missing-value-aware constrained NNLS problem.
///
/// `a_miss` may have zero rows, in which case this is plain NNLS.
pub fn constrained_nnls(
    a_obs: &DMatrix<f64>,
    y_obs: &[f64],
    a_miss: &DMatrix<f64>,
    y_min: f64,
) -> Result<NnlsSolution> {
    let n = a_obs.ncols();
    if n == 0 {
        return Err(Error::invalid("constrained NNLS needs at least one column"));
    }
    if a_obs.nrows() == 0 {
        return Err(Error::invalid("constrained NNLS needs at least one observed row"));
    }
    if y_obs.len() != a_obs.nrows() {
        return Err(Error::dims(format!("y_obs has {} rows, A_obs has {}", y_obs.len(), a_obs.nrows())));
    }
    if a_miss.nrows() > 0 && a_miss.ncols() != n {
        return Err(Error::dims("A_miss must have the same columns as A_obs"));
    }
    if a_miss.nrows() > 0 && !(y_min >= 0.0) {
        return Err(Error::invalid(format!("y_min must be nonnegative, got {y_min}")));
    }
    if a_obs.iter().chain(a_miss.iter()).chain(y_obs.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("constrained NNLS inputs must be finite"));
    }

    // Rescale: unit column norms (over all rows) and unit data magnitude.
    let col_scale: Vec<f64> = (0..n)
        .map(|j| {
            let s = a_obs.column(j).norm_squared() + a_miss.column(j).norm_squared();
            s.sqrt()
        })
        .collect();
    let data_scale = y_obs
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(if a_miss.nrows() > 0 { y_min } else { 0.0 });
    if data_scale == 0.0 {
        return Ok(NnlsSolution { z: vec![0.0; n], iterations: 0, kkt_residual: 0.0 });
    }
    let live: Vec<usize> = (0..n).filter(|&j| col_scale[j] > 0.0).collect();
    let a = DMatrix::from_fn(a_obs.nrows(), live.len(), |r, c| a_obs[(r, live[c])] / col_scale[live[c]]);
    let b = DMatrix::from_fn(a_miss.nrows(), live.len(), |r, c| a_miss[(r, live[c])] / col_scale[live[c]]);
    let y = DVector::from_iterator(y_obs.len(), y_obs.iter().map(|v| v / data_scale));
    let h = if a_miss.nrows() > 0 { y_min / data_scale } else { 0.0 };

    let solved = ActiveSet::new(&a, &y, &b, h).run()?;
    let mut z = vec![0.0; n];
    for (c, &j) in live.iter().enumerate() {
        z[j] = solved.z[c] * data_scale / col_scale[j];
    }
    Ok(NnlsSolution { z, iterations: solved.iterations, kkt_residual: solved.kkt_residual })
}

struct ActiveSet<'a> {
    a: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    b: &'a DMatrix<f64>,
    h: f64,
    z: DVector<f64>,
    /// Variables held at their zero bound.
    at_bound: Vec<bool>,
    /// Rows of `b` held at equality.
    at_cap: Vec<bool>,
}

struct Solved {
    z: DVector<f64>,
    iterations: usize,
    kkt_residual: f64,
}

impl<'a> ActiveSet<'a> {
    fn new(a: &'a DMatrix<f64>, y: &'a DVector<f64>, b: &'a DMatrix<f64>, h: f64) -> Self {
        let n = a.ncols();
        ActiveSet {
            a,
            y,
            b,
            h,
            z: DVector::zeros(n),
            at_bound: vec![true; n],
            at_cap: vec![false; b.nrows()],
        }
    }

    fn gradient(&self) -> DVector<f64> {
        self.a.transpose() * (self.a * &self.z - self.y)
    }

    fn run(mut self) -> Result<Solved> {
        let n = self.a.ncols();
        let max_iter = 100 * (n + self.b.nrows()) + 100;
        let grad_scale = (self.a.transpose() * self.y).norm().max(TOL);
        for iteration in 1..=max_iter {
            let free: Vec<usize> = (0..n).filter(|&j| !self.at_bound[j]).collect();
            let caps: Vec<usize> = (0..self.b.nrows()).filter(|&r| self.at_cap[r]).collect();
            let step = self.subproblem_step(&free, &caps);
            let step_norm = step.norm();
            if step_norm <= 1e-13 * (1.0 + self.z.norm()) {
                let (lambda_bound, lambda_cap, residual) = self.multipliers(&free, &caps);
                // Most negative multiplier leaves the working set; lowest index on ties.
                let mut worst: Option<(f64, bool, usize)> = None;
                for (j, &l) in lambda_bound.iter().enumerate() {
                    if self.at_bound[j] && l < -TOL && worst.is_none_or(|w| l < w.0) {
                        worst = Some((l, true, j));
                    }
                }
                for (k, &r) in caps.iter().enumerate() {
                    let l = lambda_cap[k];
                    if l < -TOL && worst.is_none_or(|w| l < w.0) {
                        worst = Some((l, false, r));
                    }
                }
                match worst {
                    None => {
                        return Ok(Solved {
                            z: self.z.map(|v| v.max(0.0)),
                            iterations: iteration,
                            kkt_residual: residual / grad_scale,
                        })
                    }
                    Some((_, true, j)) => self.at_bound[j] = false,
                    Some((_, false, r)) => self.at_cap[r] = false,
                }
                continue;
            }

            // Ratio test over inactive constraints.
            let mut alpha = 1.0;
            let mut blocking: Option<(bool, usize)> = None;
            for &j in &free {
                if step[j] < 0.0 {
                    let t = -self.z[j] / step[j];
                    if t < alpha {
                        alpha = t.max(0.0);
                        blocking = Some((true, j));
                    }
                }
            }
            for r in 0..self.b.nrows() {
                if self.at_cap[r] {
                    continue;
                }
                let rate = self.b.row(r).dot(&step.transpose());
                if rate > 0.0 {
                    let slack = self.h - self.b.row(r).dot(&self.z.transpose());
                    let t = slack.max(0.0) / rate;
                    if t < alpha {
                        alpha = t;
                        blocking = Some((false, r));
                    }
                }
            }
            self.z += alpha * &step;
            match blocking {
                Some((true, j)) => {
                    self.z[j] = 0.0;
                    self.at_bound[j] = true;
                }
                Some((false, r)) => self.at_cap[r] = true,
                None => {}
            }
        }
        Err(Error::Numerical(format!("constrained NNLS did not converge in {max_iter} iterations")))
    }

    /// Minimizer step of the objective over the current face, zero on bounded variables.
    fn subproblem_step(&self, free: &[usize], caps: &[usize]) -> DVector<f64> {
        let n = self.a.ncols();
        let mut step = DVector::zeros(n);
        if free.is_empty() {
            return step;
        }
        let basis = null_space(&DMatrix::from_fn(caps.len(), free.len(), |r, c| self.b[(caps[r], free[c])]), free.len());
        if basis.ncols() == 0 {
            return step;
        }
        let a_free = DMatrix::from_fn(self.a.nrows(), free.len(), |r, c| self.a[(r, free[c])]);
        let reduced = &a_free * &basis;
        let residual = self.y - self.a * &self.z;
        let svd = reduced.svd(true, true);
        let eps = TOL * svd.singular_values.max().max(TOL);
        let u = match svd.solve(&residual, eps) {
            Ok(u) => u,
            Err(_) => return step,
        };
        let p_free = basis * u;
        for (c, &j) in free.iter().enumerate() {
            step[j] = p_free[c];
        }
        step
    }

    /// Lagrange multipliers for bounds (indexed by variable) and active caps, plus
    /// the stationarity residual norm on the free variables.
    fn multipliers(&self, free: &[usize], caps: &[usize]) -> (Vec<f64>, Vec<f64>, f64) {
        let g = self.gradient();
        let n = self.a.ncols();
        // Stationarity: g = sum_bound lambda_j e_j - sum_caps lambda_r b_r.
        let lambda_cap = if caps.is_empty() {
            Vec::new()
        } else {
            let bt = DMatrix::from_fn(free.len(), caps.len(), |r, c| -self.b[(caps[c], free[r])]);
            let gf = DVector::from_iterator(free.len(), free.iter().map(|&j| g[j]));
            if free.is_empty() {
                // Every variable is at its bound; the caps carry no information.
                vec![0.0; caps.len()]
            } else {
                let svd = bt.svd(true, true);
                let eps = TOL * svd.singular_values.max().max(TOL);
                svd.solve(&gf, eps).map(|v| v.iter().copied().collect()).unwrap_or_else(|_| vec![0.0; caps.len()])
            }
        };
        let mut combined = g.clone();
        for (k, &r) in caps.iter().enumerate() {
            for j in 0..n {
                combined[j] += lambda_cap[k] * self.b[(r, j)];
            }
        }
        let residual = free.iter().map(|&j| combined[j] * combined[j]).sum::<f64>().sqrt();
        let lambda_bound = (0..n).map(|j| if self.at_bound[j] { combined[j] } else { 0.0 }).collect();
        (lambda_bound, lambda_cap, residual)
    }
}

/// Orthonormal basis of the null space of `m` (rows x cols), as columns.
fn null_space(m: &DMatrix<f64>, cols: usize) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    let gram = m.transpose() * m;
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let keep: Vec<usize> = (0..cols).filter(|&k| eig.eigenvalues[k].abs() <= 1e-12 * top.max(TOL)).collect();
    DMatrix::from_fn(cols, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::LU;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive oracle: try every subset of constraints as equalities and keep the
    /// best feasible KKT point. Only usable for tiny problems with full-rank `A`.
    fn brute_force(a: &DMatrix<f64>, y: &[f64], b: &DMatrix<f64>, h: f64) -> (Vec<f64>, f64) {
        let n = a.ncols();
        let m = b.nrows();
        let total = n + m;
        let g = a.transpose() * a;
        let c = a.transpose() * DVector::from_column_slice(y);
        let mut best = (vec![0.0; n], f64::INFINITY);
        for mask in 0u32..(1 << total) {
            let active: Vec<usize> = (0..total).filter(|k| mask & (1 << k) != 0).collect();
            let k = active.len();
            let mut kkt = DMatrix::zeros(n + k, n + k);
            let mut rhs = DVector::zeros(n + k);
            kkt.view_mut((0, 0), (n, n)).copy_from(&g);
            rhs.rows_mut(0, n).copy_from(&c);
            for (row, &con) in active.iter().enumerate() {
                let normal: Vec<f64> = if con < n {
                    (0..n).map(|j| if j == con { 1.0 } else { 0.0 }).collect()
                } else {
                    (0..n).map(|j| b[(con - n, j)]).collect()
                };
                for j in 0..n {
                    kkt[(n + row, j)] = normal[j];
                    kkt[(j, n + row)] = normal[j];
                }
                rhs[n + row] = if con < n { 0.0 } else { h };
            }
            let Some(sol) = LU::new(kkt).solve(&rhs) else { continue };
            let z: Vec<f64> = (0..n).map(|j| sol[j]).collect();
            let feasible = z.iter().all(|&v| v >= -1e-10)
                && (0..m).all(|r| (0..n).map(|j| b[(r, j)] * z[j]).sum::<f64>() <= h + 1e-10);
            if !feasible {
                continue;
            }
            let obj = (a * DVector::from_column_slice(&z) - DVector::from_column_slice(y)).norm_squared();
            if obj < best.1 - 1e-14 {
                best = (z, obj);
            }
        }
        best
    }

    fn empty(n: usize) -> DMatrix<f64> {
        DMatrix::zeros(0, n)
    }

    #[test]
    fn orthonormal_plain_nnls_is_projection() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let y = [2.0, 3.0, 5.0];
        let sol = constrained_nnls(&a, &y, &empty(2), 1.0).unwrap();
        assert!((sol.z[0] - 2.0).abs() < 1e-12 && (sol.z[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_data_gives_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let sol = constrained_nnls(&a, &[0.0, 0.0], &empty(2), 0.0).unwrap();
        assert_eq!(sol.z, vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_cap_binds() {
        // Unconstrained 2z = 10 gives z = 5; the missing row caps z at 3.
        let a = DMatrix::from_element(1, 1, 2.0);
        let b = DMatrix::from_element(1, 1, 1.0);
        let sol = constrained_nnls(&a, &[10.0], &b, 3.0).unwrap();
        assert!((sol.z[0] - 3.0).abs() < 1e-12, "{:?}", sol.z);
    }

    #[test]
    fn negative_correlation_stays_at_zero() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let sol = constrained_nnls(&a, &[-1.0, -2.0], &empty(1), 0.0).unwrap();
        assert_eq!(sol.z, vec![0.0]);
    }

    #[test]
    fn parallel_columns_do_not_break_the_solver() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let sol = constrained_nnls(&a, &[3.0, 3.0, 3.0], &empty(2), 0.0).unwrap();
        let fit: f64 = (0..3).map(|r| (a[(r, 0)] * sol.z[0] + a[(r, 1)] * sol.z[1] - 3.0).powi(2)).sum();
        assert!(fit < 1e-20, "{fit}");
        assert!(sol.z.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        let a = DMatrix::from_element(2, 2, 1.0);
        assert!(constrained_nnls(&a, &[1.0], &empty(2), 1.0).is_err());
        assert!(constrained_nnls(&DMatrix::zeros(2, 0), &[1.0, 1.0], &empty(0), 1.0).is_err());
        assert!(constrained_nnls(&a, &[1.0, 1.0], &DMatrix::zeros(1, 3), 1.0).is_err());
    }

    #[test]
    fn matches_exhaustive_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..300 {
            let n = rng.random_range(1..=3);
            let rows = rng.random_range(n..=5);
            let caps = rng.random_range(0..=3);
            let a = DMatrix::from_fn(rows, n, |_, _| rng.random_range(0.0..1.0));
            let b = DMatrix::from_fn(caps, n, |_, _| rng.random_range(0.0..1.0));
            let y: Vec<f64> = (0..rows).map(|_| rng.random_range(-0.2..1.5)).collect();
            let h = rng.random_range(0.05..0.6);
            let sol = constrained_nnls(&a, &y, &b, h).unwrap();
            let (z_ref, obj_ref) = brute_force(&a, &y, &b, h);
            let obj = (&a * DVector::from_column_slice(&sol.z) - DVector::from_column_slice(&y)).norm_squared();
            assert!(obj <= obj_ref + 1e-10 * (1.0 + obj_ref), "case {case}: {obj} vs {obj_ref}");
            for j in 0..n {
                assert!((sol.z[j] - z_ref[j]).abs() < 1e-6 * (1.0 + z_ref[j].abs()), "case {case}: {:?} vs {:?}", sol.z, z_ref);
            }
            assert!(sol.z.iter().all(|&v| v >= 0.0));
            for r in 0..caps {
                let v: f64 = (0..n).map(|j| b[(r, j)] * sol.z[j]).sum();
                assert!(v <= h + 1e-8 * h.max(1.0));
            }
            assert!(sol.kkt_residual <= 1e-6, "case {case}: kkt {}", sol.kkt_residual);
        }
    }

    #[test]
    fn scale_invariance() {
        let a = DMatrix::from_row_slice(3, 2, &[1e3, 2e2, 5e2, 9e2, 1e2, 1e2]);
        let b = DMatrix::from_row_slice(1, 2, &[3e2, 4e2]);
        let y = [8e-8, 9e-8, 1e-8];
        let s1 = constrained_nnls(&a, &y, &b, 2e-8).unwrap();
        let y2: Vec<f64> = y.iter().map(|v| v * 1e9).collect();
        let s2 = constrained_nnls(&a, &y2, &b, 2e-8 * 1e9).unwrap();
        for j in 0..2 {
            assert!((s1.z[j] * 1e9 - s2.z[j]).abs() <= 1e-9 * s2.z[j].abs().max(1e-30));
        }
    }
}
