//! Measurement-report driven localized statistical channel modeling.
//!
//! The crate turns masked multi-beam RSRP reports into localized channel models:
//! samples are located with a semi-supervised hypergraph network, grouped into
//! grids, and each grid receives a sparse nonnegative angular power spectrum.

pub mod channel_model;
pub mod error;
pub mod eval;
pub mod grid_builder;
pub mod hgnn;
pub mod sparse;
pub mod synth;
pub mod units;

pub use error::{Error, Result};
