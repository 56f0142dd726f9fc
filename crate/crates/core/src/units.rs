//! Conversions between dBm and linear milliwatts.

use crate::error::{Error, Result};

/// Placeholder stored for beams that were not measured.
pub const MISSING_DBM: f64 = -140.0;

pub fn dbm_to_linear(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn linear_to_dbm(mw: f64) -> Result<f64> {
    if !(mw > 0.0) || !mw.is_finite() {
        return Err(Error::invalid(format!("linear power must be positive and finite, got {mw}")));
    }
    Ok(10.0 * mw.log10())
}

/// Like [`linear_to_dbm`] but clamps non-positive powers to the missing-value floor.
pub fn linear_to_dbm_floored(mw: f64) -> f64 {
    if mw > 0.0 {
        (10.0 * mw.log10()).max(MISSING_DBM)
    } else {
        MISSING_DBM
    }
}
