//! RSRP prediction metrics and the end-to-end pipeline driver.
//!
//! Test samples inherit the grid of the nearest training sample. MAE is taken in the
//! dB domain over valid beams only, averaged per sample, per grid, then over populated grids.

mod io;
mod metrics;
mod pipeline;
mod sweep;

pub use io::{read_file, read_locations_csv, read_locations_from, write_file, write_locations_csv, write_locations_to};
pub use metrics::{assign_test_grids, masked_mae_db, test_mae, train_mae, MaeSummary};
pub use pipeline::{
    build_grids, estimate_locations, evaluate, prepare_world, run_pipeline, EvalReport, GridDiagnostics, GridMethod,
    LocationEstimate, LocationSource, PipelineConfig, World,
};
pub use sweep::{median, median_test_mae, par_map, sweep, write_sweep_csv, SweepRow, SweepSpec};

#[cfg(test)]
mod tests;
