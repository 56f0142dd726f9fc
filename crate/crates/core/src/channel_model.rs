//! Angular grid, beam codebooks and the beam-gain measurement matrix.
//!
//! The expected multi-beam RSRP of a location is linear in its angular
//! power spectrum: `y = A x`, where column `a` of `A` holds the coherent
//! beamforming gain of every beam towards grid angle `a`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Antenna element gain as a function of (tilt, azimuth) in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GainPattern {
    #[default]
    Isotropic,
    /// 3GPP-style parabolic element pattern.
    Parabolic {
        tilt_3db: f64,
        azimuth_3db: f64,
        /// Maximum attenuation in dB (front-to-back floor).
        max_attenuation_db: f64,
        /// Boresight tilt in degrees.
        #[serde(default)]
        electrical_tilt: f64,
    },
}

impl GainPattern {
    pub fn gain(&self, tilt: f64, azimuth: f64) -> f64 {
        match *self {
            GainPattern::Isotropic => 1.0,
            GainPattern::Parabolic { tilt_3db, azimuth_3db, max_attenuation_db, electrical_tilt } => {
                let az = wrap_degrees(azimuth);
                let vertical = (12.0 * ((tilt - electrical_tilt) / tilt_3db).powi(2)).min(max_attenuation_db);
                let horizontal = (12.0 * (az / azimuth_3db).powi(2)).min(max_attenuation_db);
                let att = (vertical + horizontal).min(max_attenuation_db);
                10f64.powf(-att / 10.0)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let GainPattern::Parabolic { tilt_3db, azimuth_3db, max_attenuation_db, electrical_tilt } = *self {
            if !(tilt_3db > 0.0 && azimuth_3db > 0.0) || !(max_attenuation_db >= 0.0) || !electrical_tilt.is_finite() {
                return Err(Error::invalid("parabolic pattern needs positive beamwidths and attenuation >= 0"));
            }
        }
        Ok(())
    }
}

/// Wraps an angle in degrees to (-180, 180].
pub fn wrap_degrees(deg: f64) -> f64 {
    let mut d = deg % 360.0;
    if d <= -180.0 {
        d += 360.0;
    } else if d > 180.0 {
        d -= 360.0;
    }
    d
}

/// Uniform planar array parameters. Spacings are in carrier wavelengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaConfig {
    pub n_x: usize,
    pub n_y: usize,
    pub d_x: f64,
    pub d_y: f64,
    /// Carrier wavelength in meters. Informational only; spacings are relative to it.
    pub carrier_wavelength: f64,
    /// Transmit power in linear mW.
    pub tx_power: f64,
    #[serde(default)]
    pub gain_pattern: GainPattern,
}

impl Default for AntennaConfig {
    fn default() -> Self {
        AntennaConfig {
            n_x: 4,
            n_y: 8,
            d_x: 0.5,
            d_y: 0.5,
            carrier_wavelength: 0.0857,
            tx_power: 1.0,
            gain_pattern: GainPattern::Isotropic,
        }
    }
}

impl AntennaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_y == 0 {
            return Err(Error::invalid("antenna counts must be >= 1"));
        }
        if !(self.d_x > 0.0 && self.d_y > 0.0) {
            return Err(Error::invalid("antenna spacings must be positive"));
        }
        if !(self.tx_power > 0.0) || !self.tx_power.is_finite() {
            return Err(Error::invalid("tx_power must be positive"));
        }
        self.gain_pattern.validate()
    }

    pub fn n_antennas(&self) -> usize {
        self.n_x * self.n_y
    }
}

/// Discretized tilt x azimuth grid. Flat index `a = i * n_h + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularGrid {
    tilts: Vec<f64>,
    azimuths: Vec<f64>,
}

/// Inclusive range description used in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub tilt_start: f64,
    pub tilt_stop: f64,
    pub tilt_step: f64,
    pub az_start: f64,
    pub az_stop: f64,
    pub az_step: f64,
}

impl Default for GridSpec {
    /// 2 degree tilt and 5 degree azimuth steps, 91 x 72 = 6552 angles.
    fn default() -> Self {
        GridSpec {
            tilt_start: -90.0,
            tilt_stop: 90.0,
            tilt_step: 2.0,
            az_start: -90.0,
            az_stop: 265.0,
            az_step: 5.0,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<AngularGrid> {
        build_angular_grid(
            self.tilt_start,
            self.tilt_stop,
            self.tilt_step,
            self.az_start,
            self.az_stop,
            self.az_step,
        )
    }
}

fn progression(start: f64, stop: f64, step: f64, what: &str) -> Result<Vec<f64>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid(format!("{what} step must be positive, got {step}")));
    }
    if !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::invalid(format!("{what} range [{start}, {stop}] is empty")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

pub fn build_angular_grid(
    tilt_start: f64,
    tilt_stop: f64,
    tilt_step: f64,
    az_start: f64,
    az_stop: f64,
    az_step: f64,
) -> Result<AngularGrid> {
    let tilts = progression(tilt_start, tilt_stop, tilt_step, "tilt")?;
    let azimuths = progression(az_start, az_stop, az_step, "azimuth")?;
    Ok(AngularGrid { tilts, azimuths })
}

impl AngularGrid {
    /// Builds a grid from explicit, strictly increasing angle lists.
    pub fn from_angles(tilts: Vec<f64>, azimuths: Vec<f64>) -> Result<Self> {
        let increasing = |v: &[f64]| !v.is_empty() && v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&tilts) || !increasing(&azimuths) {
            return Err(Error::invalid("angle lists must be non-empty and strictly increasing"));
        }
        Ok(AngularGrid { tilts, azimuths })
    }

    pub fn tilts(&self) -> &[f64] {
        &self.tilts
    }

    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    pub fn n_v(&self) -> usize {
        self.tilts.len()
    }

    pub fn n_h(&self) -> usize {
        self.azimuths.len()
    }

    pub fn n_a(&self) -> usize {
        self.n_v() * self.n_h()
    }

    pub fn index(&self, tilt_idx: usize, az_idx: usize) -> usize {
        tilt_idx * self.n_h() + az_idx
    }

    /// (tilt, azimuth) in degrees of flat index `a`.
    pub fn angle(&self, a: usize) -> (f64, f64) {
        (self.tilts[a / self.n_h()], self.azimuths[a % self.n_h()])
    }

    /// Flat index of the grid angle closest to (tilt, azimuth); azimuth distance is wrapped.
    pub fn nearest(&self, tilt: f64, azimuth: f64) -> usize {
        let ti = nearest_index(&self.tilts, |t| (t - tilt).abs());
        let ai = nearest_index(&self.azimuths, |a| wrap_degrees(a - azimuth).abs());
        self.index(ti, ai)
    }
}

fn nearest_index(values: &[f64], dist: impl Fn(f64) -> f64) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if dist(v) < dist(values[best]) {
            best = i;
        }
    }
    best
}

/// Per-antenna phase offsets of each beam. Antenna `(x, y)` (1-based) lives at
/// flat position `(x - 1) * n_y + (y - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamCodebook {
    phases: Vec<Vec<f64>>,
}

impl BeamCodebook {
    pub fn from_phases(phases: Vec<Vec<f64>>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::invalid("codebook needs at least one beam"));
        }
        let n = phases[0].len();
        if n == 0 || phases.iter().any(|p| p.len() != n) {
            return Err(Error::dims("all beams must have the same non-zero antenna count"));
        }
        if phases.iter().flatten().any(|p| !p.is_finite()) {
            return Err(Error::invalid("beam phases must be finite"));
        }
        Ok(BeamCodebook { phases })
    }

    /// Conjugate-phase beams steered towards each (tilt, azimuth) pointing angle.
    pub fn steered(config: &AntennaConfig, pointing: &[(f64, f64)]) -> Result<Self> {
        config.validate()?;
        let phases = pointing
            .iter()
            .map(|&(tilt, az)| {
                array_response(config, tilt, az)
                    .into_iter()
                    .map(|c| -c.arg())
                    .collect()
            })
            .collect();
        BeamCodebook::from_phases(phases)
    }

    pub fn m(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self, beam: usize) -> &[f64] {
        &self.phases[beam]
    }

    /// Codebook with beams reordered: beam `k` of the result is beam `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        BeamCodebook { phases: order.iter().map(|&k| self.phases[k].clone()).collect() }
    }
}

/// Steering response of the array towards (tilt, azimuth) in degrees.
pub fn array_response(config: &AntennaConfig, tilt: f64, azimuth: f64) -> Vec<Complex64> {
    let (t, p) = (tilt.to_radians(), azimuth.to_radians());
    let kx = -2.0 * PI * config.d_x * t.cos() * p.sin();
    let ky = -2.0 * PI * config.d_y * t.sin();
    let mut out = Vec::with_capacity(config.n_antennas());
    for x in 1..=config.n_x {
        for y in 1..=config.n_y {
            out.push(Complex64::from_polar(1.0, kx * x as f64 + ky * y as f64));
        }
    }
    out
}

/// Linear power gain of every beam towards one angle.
pub fn beam_gains(config: &AntennaConfig, codebook: &BeamCodebook, tilt: f64, azimuth: f64) -> Vec<f64> {
    let response = array_response(config, tilt, azimuth);
    let scale = config.tx_power * config.gain_pattern.gain(tilt, azimuth);
    (0..codebook.m())
        .map(|m| {
            let sum: Complex64 = codebook
                .phases(m)
                .iter()
                .zip(&response)
                .map(|(&phi, r)| Complex64::from_polar(1.0, phi) * r)
                .sum();
            scale * sum.norm_sqr()
        })
        .collect()
}

/// The M x N_A nonnegative beam-gain dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    a: DMatrix<f64>,
    digest: String,
}

impl MeasurementMatrix {
    pub fn from_matrix(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::dims("measurement matrix must be non-empty"));
        }
        if a.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("measurement matrix entries must be finite and nonnegative"));
        }
        let digest = digest_values(a.as_slice());
        Ok(MeasurementMatrix { a, digest })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Number of beams M.
    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// Number of angles N_A.
    pub fn n_a(&self) -> usize {
        self.a.ncols()
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn get(&self, beam: usize, angle: usize) -> f64 {
        self.a[(beam, angle)]
    }

    pub fn column(&self, angle: usize) -> &[f64] {
        let m = self.m();
        &self.a.as_slice()[angle * m..(angle + 1) * m]
    }

    /// Encodes as `M:u32, N_A:u32` little-endian followed by row-major f64 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (m, n) = (self.m(), self.n_a());
        let mut out = Vec::with_capacity(8 + 8 * m * n);
        out.extend_from_slice(&(m as u32).to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        for r in 0..m {
            for c in 0..n {
                out.extend_from_slice(&self.a[(r, c)].to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::invalid("matrix file shorter than its header"));
        }
        let m = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() != 8 + 8 * m * n {
            return Err(Error::dims(format!(
                "matrix header says {m}x{n} but payload has {} bytes",
                bytes.len() - 8
            )));
        }
        let mut values = bytes[8..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut a = DMatrix::zeros(m, n);
        for r in 0..m {
            for c in 0..n {
                a[(r, c)] = values.next().unwrap();
            }
        }
        MeasurementMatrix::from_matrix(a)
    }
}

fn digest_values(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_bits().to_le_bytes()).collect();
    fnv1a_hex(&bytes)
}

/// FNV-1a hash rendered as 16 hex digits.
pub(crate) fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

pub fn build_measurement_matrix(
    config: &AntennaConfig,
    codebook: &BeamCodebook,
    grid: &AngularGrid,
) -> Result<MeasurementMatrix> {
    config.validate()?;
    for m in 0..codebook.m() {
        if codebook.phases(m).len() != config.n_antennas() {
            return Err(Error::dims(format!(
                "beam {m} has {} phases but the array has {} antennas",
                codebook.phases(m).len(),
                config.n_antennas()
            )));
        }
    }
    let mut a = DMatrix::zeros(codebook.m(), grid.n_a());
    for col in 0..grid.n_a() {
        let (tilt, az) = grid.angle(col);
        for (m, g) in beam_gains(config, codebook, tilt, az).into_iter().enumerate() {
            a[(m, col)] = g;
        }
    }
    MeasurementMatrix::from_matrix(a)
}

/// `y = A x` in linear power.
pub fn expected_rsrp(a: &MeasurementMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.n_a() {
        return Err(Error::dims(format!("APS has length {} but A has {} columns", x.len(), a.n_a())));
    }
    if let Some(v) = x.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid(format!("APS entries must be nonnegative, found {v}")));
    }
    let mut y = vec![0.0; a.m()];
    for (col, &xv) in x.iter().enumerate() {
        if xv != 0.0 {
            for (yi, av) in y.iter_mut().zip(a.column(col)) {
                *yi += av * xv;
            }
        }
    }
    Ok(y)
}

/// Antenna, codebook pointing angles and grid, as stored in JSON config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub antenna: AntennaConfig,
    /// (tilt, azimuth) pointing angles of the steered beams, in degrees.
    pub pointing: Vec<(f64, f64)>,
    #[serde(default)]
    pub grid: GridSpec,
}

impl ChannelConfig {
    /// Eight steered beams covering the service sector before adjustment.
    pub fn default_serving() -> Self {
        ChannelConfig {
            antenna: AntennaConfig::default(),
            pointing: [-45.0, -15.0, 15.0, 45.0]
                .iter()
                .flat_map(|&t| [(t, 8.0), (t, 25.0)])
                .collect(),
            grid: GridSpec::default(),
        }
    }

    /// A second codebook standing in for a parameter adjustment of the serving cell.
    pub fn default_adjusted() -> Self {
        ChannelConfig {
            antenna: AntennaConfig::default(),
            pointing: [-60.0, -25.0, 5.0, 35.0]
                .iter()
                .flat_map(|&t| [(t, 12.0), (t, 35.0)])
                .collect(),
            grid: GridSpec::default(),
        }
    }

    pub fn codebook(&self) -> Result<BeamCodebook> {
        BeamCodebook::steered(&self.antenna, &self.pointing)
    }

    pub fn grid(&self) -> Result<AngularGrid> {
        self.grid.build()
    }

    pub fn build(&self) -> Result<(AngularGrid, MeasurementMatrix)> {
        let grid = self.grid()?;
        let a = build_measurement_matrix(&self.antenna, &self.codebook()?, &grid)?;
        Ok((grid, a))
    }
}
