//! Sparse nonnegative APS recovery from grid-averaged multi-beam RSRP.
//!
//! Three greedy solvers share one pursuit loop and differ in how the next
//! column is chosen and whether unobserved beams constrain the refit:
//!
//! * [`gm_nnomp`]: geometry-weighted correlation, refit with the missing-beam cap.
//! * [`nnomp`]: plain normalized correlation, plain NNLS refit.
//! * [`wnomp`]: normalized correlation share plus column-magnitude share.

mod nnls;
mod pursuit;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel_model::{wrap_degrees, AngularGrid};
use crate::error::{Error, Result};

pub use nnls::{constrained_nnls, NnlsSolution};
pub use pursuit::{gm_nnomp, nnomp, pursue, wnomp, ApsEstimate, SelectionRule};

/// Default RBF kernel widths in degrees.
pub const DEFAULT_SIGMA_THETA: f64 = 10.0;
pub const DEFAULT_SIGMA_PHI: f64 = 10.0;

/// Grid centroid and BS geometry used to favour line-of-sight angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryPrior {
    pub grid_centroid: (f64, f64),
    pub bs_location: (f64, f64, f64),
    pub sigma_theta: f64,
    pub sigma_phi: f64,
}

impl GeometryPrior {
    pub fn new(grid_centroid: (f64, f64), bs_location: (f64, f64, f64)) -> Self {
        GeometryPrior { grid_centroid, bs_location, sigma_theta: DEFAULT_SIGMA_THETA, sigma_phi: DEFAULT_SIGMA_PHI }
    }

    pub fn with_sigmas(mut self, sigma_theta: f64, sigma_phi: f64) -> Self {
        self.sigma_theta = sigma_theta;
        self.sigma_phi = sigma_phi;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma_theta > 0.0 && self.sigma_phi > 0.0) {
            return Err(Error::invalid("kernel widths must be positive"));
        }
        Ok(())
    }
}

/// Angle pair (theta, phi) in degrees from the BS to the grid centroid:
/// `theta = atan2(dy, dx)` and `phi = atan(h_bs / planar distance)`.
pub fn relative_angle(prior: &GeometryPrior) -> Result<(f64, f64)> {
    let dx = prior.grid_centroid.0 - prior.bs_location.0;
    let dy = prior.grid_centroid.1 - prior.bs_location.1;
    let planar = dx.hypot(dy);
    if !(planar > 0.0) {
        return Err(Error::invalid("grid centroid coincides with the BS planar position"));
    }
    Ok((dy.atan2(dx).to_degrees(), (prior.bs_location.2 / planar).atan().to_degrees()))
}

/// RBF weight of every grid angle around the relative angle.
pub fn geometric_weights(prior: &GeometryPrior, grid: &AngularGrid) -> Result<Vec<f64>> {
    prior.validate()?;
    let (theta, phi) = relative_angle(prior)?;
    Ok((0..grid.n_a())
        .map(|a| {
            let (t, p) = grid.angle(a);
            rbf_weight(t - theta, wrap_degrees(p - phi), prior.sigma_theta, prior.sigma_phi)
        })
        .collect())
}

fn rbf_weight(d_theta: f64, d_phi: f64, sigma_theta: f64, sigma_phi: f64) -> f64 {
    (-(d_theta * d_theta) / (sigma_theta * sigma_theta) - (d_phi * d_phi) / (sigma_phi * sigma_phi)).exp()
}

/// Which pursuit variant estimates each grid's APS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Gm,
    Nnomp,
    Wnomp,
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gm" | "gm-nnomp" | "gm_nnomp" => Ok(Solver::Gm),
            "nnomp" => Ok(Solver::Nnomp),
            "wnomp" => Ok(Solver::Wnomp),
            other => Err(Error::invalid(format!("unknown solver `{other}` (expected gm, nnomp or wnomp)"))),
        }
    }
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::Gm => "gm",
            Solver::Nnomp => "nnomp",
            Solver::Wnomp => "wnomp",
        })
    }
}

/// Runs `solver` on one grid. `prior` is only consulted by GM-NNOMP.
pub fn estimate_aps(
    solver: Solver,
    y_bar: &[f64],
    mask: &[bool],
    a: &crate::channel_model::MeasurementMatrix,
    grid: &AngularGrid,
    prior: &GeometryPrior,
    c: usize,
) -> Result<ApsEstimate> {
    match solver {
        Solver::Gm => gm_nnomp(y_bar, mask, a, grid, prior, c),
        Solver::Nnomp => nnomp(y_bar, mask, a, c),
        Solver::Wnomp => wnomp(y_bar, mask, a, c),
    }
}
