//! `mrlscm`: synthetic data generation, localization, grid fitting and evaluation.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mrlscm", version, about = "Localized statistical channel modeling from measurement reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a measurement matrix from a channel config.
    Matrix {
        /// Channel config JSON; defaults to the built-in serving codebook.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the built-in adjusted codebook when no config is given.
        #[arg(long)]
        adjusted: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a scenario (regions, APS, neighbors).
    Scenario {
        /// Scenario generator config JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        regions: Option<usize>,
        #[arg(long)]
        c_true: Option<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render training and test measurement reports from a scenario.
    Gen {
        #[arg(long)]
        scenario: PathBuf,
        /// Dataset config JSON.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        shadowing: Option<f64>,
        #[arg(long)]
        label_fraction: Option<f64>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        out_test: PathBuf,
        /// Also write the training and test matrices.
        #[arg(long)]
        matrix_out: Option<PathBuf>,
        #[arg(long)]
        matrix_test_out: Option<PathBuf>,
    },
    /// Locate training samples with the hypergraph network.
    Localize {
        #[arg(long)]
        train: PathBuf,
        /// Re-draw the labeled subset with this fraction; otherwise the CSV flags are used.
        #[arg(long)]
        label_fraction: Option<f64>,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long, default_value_t = 3.0)]
        tau: f64,
        #[arg(long, default_value_t = 2000)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0.9)]
        momentum: f64,
        /// Layer widths after the input, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [200, 1000, 2])]
        widths: Vec<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Writes `<prefix>.bin` and `<prefix>.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Estimate one APS from a mean RSRP vector.
    Aps {
        #[arg(long)]
        matrix: PathBuf,
        /// Angular grid source; defaults to the built-in serving config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ybar: PathBuf,
        #[arg(long, value_parser = commands::parse_pair)]
        centroid: (f64, f64),
        #[arg(long, value_parser = commands::parse_triple, default_value = "0,0,30")]
        bs: (f64, f64, f64),
        #[arg(long, default_value_t = 6)]
        c: usize,
        #[arg(long, default_value = "gm")]
        solver: String,
        #[arg(long)]
        sigma_theta: Option<f64>,
        #[arg(long)]
        sigma_phi: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build grids and per-grid APS from training reports and locations.
    Fit {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        locs: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
        /// Supplies the BS location and angular grid.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Channel config for the angular grid when no scenario is given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = commands::parse_triple)]
        bs: Option<(f64, f64, f64)>,
        #[arg(long, default_value = "joint")]
        method: String,
        #[arg(long, default_value = "gm")]
        solver: String,
        #[arg(long, default_value_t = 24)]
        k: usize,
        #[arg(long, default_value_t = 6)]
        c: usize,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 15)]
        iters: usize,
        /// Uniform cell width in meters.
        #[arg(long)]
        width: Option<f64>,
        #[arg(long)]
        power_ref_dbm: Option<f64>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a fitted model on test reports.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        matrix_test: PathBuf,
        /// Training reports: their true locations drive test assignment and enable Train MAE.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a grid of pipeline configurations.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline and keep every artifact.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match commands::dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
