//! Parameter sweeps over `(κ, θ)` and the bound-curve selection experiment.

pub mod cli;
pub mod config;

use std::f64::consts::PI;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusterError, KMeansOptions};
use crate::kde::{self, DensityCurve, KdeError};
use crate::measure::{self, Flag, MeasureError, MeasureParams, Phi};
use crate::qubit::{BlochVector, DensityMatrix};
use crate::sme::{self, MeasurementConfig, SmeError};

/// Default strength axis in 1/μs, spanning κT ≈ 0.02 … 10 at T = 200 μs.
pub const DEFAULT_KAPPAS: [f64; 9] = [0.0001, 0.0002, 0.0005, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05];

/// θ = 0, π/16, …, π/2.
pub fn default_thetas() -> Vec<f64> {
    (0..=8).map(|k| k as f64 * PI / 16.0).collect()
}

/// Tolerance for a cell sitting exactly on a bound curve; such cells count as below.
pub const ON_CURVE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{field}: {reason}")]
    Config { field: String, reason: String },
    #[error("curve {curve}: partition needs at least 2 values per side, got {below} below and {above} above")]
    EmptyPartition { curve: String, below: usize, above: usize },
    #[error("curve {curve}: {source}")]
    Kde { curve: String, source: KdeError },
    #[error(transparent)]
    Sme(#[from] SmeError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("{0}")]
    Io(String),
}

impl ExperimentError {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ExperimentError::Config { field: field.into(), reason: reason.into() }
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the grid cell at `(kappa, theta)`; keyed on the axis values so
/// reordering an axis does not change any cell's result.
pub fn cell_seed(seed: u64, kappa: f64, theta: f64) -> u64 {
    mix(mix(mix(seed) ^ kappa.to_bits()) ^ theta.to_bits())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub rho0: DensityMatrix,
    pub kappa_values: Vec<f64>,
    pub theta_values: Vec<f64>,
    /// Template for every cell: duration, dt, seed and scheme are used, strengths and angle are overwritten.
    pub base: MeasurementConfig,
    pub n: usize,
    pub params: MeasureParams,
    pub kmeans: KMeansOptions,
    pub retain_states: bool,
}

impl SweepConfig {
    pub fn with_defaults(rho0: DensityMatrix, seed: u64) -> Self {
        SweepConfig {
            rho0,
            kappa_values: DEFAULT_KAPPAS.to_vec(),
            theta_values: default_thetas(),
            base: MeasurementConfig { seed, ..MeasurementConfig::symmetric(0.0, 0.0) },
            n: 1000,
            params: MeasureParams::default(),
            kmeans: KMeansOptions { seed, ..Default::default() },
            retain_states: false,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.kappa_values.is_empty() {
            return Err(ExperimentError::config("sweep.kappa", "must not be empty"));
        }
        if self.theta_values.is_empty() {
            return Err(ExperimentError::config("sweep.theta", "must not be empty"));
        }
        for (axis, values) in [("sweep.kappa", &self.kappa_values), ("sweep.theta", &self.theta_values)] {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(ExperimentError::config(axis, "values must be distinct"));
            }
        }
        for (i, &k) in self.kappa_values.iter().enumerate() {
            let cell = self.cell_config(k, 0.0);
            cell.validate()
                .map_err(|e| ExperimentError::config(format!("sweep.kappa[{i}]"), e.to_string()))?;
        }
        for (i, &t) in self.theta_values.iter().enumerate() {
            if !(0.0..=PI).contains(&t) {
                return Err(ExperimentError::config(format!("sweep.theta[{i}]"), "must lie in [0, pi]"));
            }
        }
        if self.n < 2 {
            return Err(ExperimentError::config("measurement.n", "must be >= 2"));
        }
        self.params.validate()?;
        Ok(())
    }

    fn cell_config(&self, kappa: f64, theta: f64) -> MeasurementConfig {
        MeasurementConfig {
            kappa1: kappa,
            kappa2: kappa,
            theta,
            seed: cell_seed(self.base.seed, kappa, theta),
            ..self.base
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRecord {
    pub kappa: f64,
    pub theta: f64,
    pub d: Option<f64>,
    pub v: Option<f64>,
    pub phi: Option<f64>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub flags: Vec<Flag>,
}

impl GridRecord {
    /// A cell with a numeric Φ and no voiding flag.
    pub fn usable_phi(&self) -> Option<f64> {
        if self.flags.iter().any(Flag::voids_phi) {
            None
        } else {
            self.phi
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    /// Row-major: κ index outer, θ index inner.
    pub records: Vec<GridRecord>,
    pub kappa_len: usize,
    pub theta_len: usize,
    /// Final states per cell, in record order, when requested.
    pub states: Option<Vec<Vec<BlochVector>>>,
}

const GRID_HEADER: [&str; 8] = ["kappa", "theta", "D", "V", "phi", "N1", "N2", "flags"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl GridResult {
    pub fn cell(&self, kappa_index: usize, theta_index: usize) -> &GridRecord {
        &self.records[kappa_index * self.theta_len + theta_index]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let io = |e: csv::Error| ExperimentError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(GRID_HEADER).map_err(io)?;
        for r in &self.records {
            let flags: Vec<&str> = r.flags.iter().map(Flag::as_str).collect();
            w.write_record([
                r.kappa.to_string(),
                r.theta.to_string(),
                opt(r.d),
                opt(r.v),
                opt(r.phi),
                opt(r.n1),
                opt(r.n2),
                flags.join("|"),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| ExperimentError::Io(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<GridResult, ExperimentError> {
        let mut rd = csv::Reader::from_reader(input);
        let bad = |row: usize, what: String| ExperimentError::config(format!("grid row {row}"), what);
        let headers = rd.headers().map_err(|e| ExperimentError::Io(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != GRID_HEADER {
            return Err(ExperimentError::config("grid header", format!("expected {}", GRID_HEADER.join(","))));
        }
        let mut records = Vec::new();
        for (row, rec) in rd.records().enumerate() {
            let row = row + 1;
            let rec = rec.map_err(|e| ExperimentError::Io(e.to_string()))?;
            let f = |i: usize| -> Result<Option<f64>, ExperimentError> {
                if rec[i].is_empty() {
                    return Ok(None);
                }
                rec[i].parse().map(Some).map_err(|_| bad(row, format!("{}: bad number {:?}", GRID_HEADER[i], &rec[i])))
            };
            let u = |i: usize| -> Result<Option<usize>, ExperimentError> {
                if rec[i].is_empty() {
                    return Ok(None);
                }
                rec[i].parse().map(Some).map_err(|_| bad(row, format!("{}: bad count {:?}", GRID_HEADER[i], &rec[i])))
            };
            let flags = rec[7]
                .split('|')
                .filter(|s| !s.is_empty())
                .map(|s| Flag::parse(s).ok_or_else(|| bad(row, format!("unknown flag {s:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            records.push(GridRecord {
                kappa: f(0)?.ok_or_else(|| bad(row, "kappa missing".into()))?,
                theta: f(1)?.ok_or_else(|| bad(row, "theta missing".into()))?,
                d: f(2)?,
                v: f(3)?,
                phi: f(4)?,
                n1: u(5)?,
                n2: u(6)?,
                flags,
            });
        }
        let distinct = |get: fn(&GridRecord) -> f64| {
            let mut v: Vec<f64> = records.iter().map(get).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v.len()
        };
        let (kappa_len, theta_len) = (distinct(|r| r.kappa), distinct(|r| r.theta));
        Ok(GridResult { records, kappa_len, theta_len, states: None })
    }
}

fn run_cell(config: &SweepConfig, kappa: f64, theta: f64) -> (GridRecord, Option<Vec<BlochVector>>) {
    let cell = config.cell_config(kappa, theta);
    let mut record = GridRecord { kappa, theta, d: None, v: None, phi: None, n1: None, n2: None, flags: Vec::new() };
    let states = match sme::simulate_ensemble(&config.rho0, &cell, config.n) {
        Ok(set) => set.states,
        Err(_) => {
            record.flags.push(Flag::Failed);
            return (record, None);
        }
    };
    let kmeans = KMeansOptions { seed: cell_seed(config.kmeans.seed ^ 0x6b6d_6561_6e73, kappa, theta), ..config.kmeans };
    match measure::measure_pipeline(&config.rho0, &states, &kmeans, &config.params) {
        Ok(m) => {
            record.d = Some(m.d);
            record.v = Some(m.v);
            record.phi = m.phi.value();
            record.n1 = Some(m.cluster_sizes[0]);
            record.n2 = Some(m.cluster_sizes[1]);
            record.flags = m.flags;
        }
        Err(MeasureError::Cluster(ClusterError::DegenerateInput(_))) => record.flags.push(Flag::DegenerateInput),
        Err(_) => record.flags.push(Flag::Failed),
    }
    let kept = config.retain_states.then_some(states);
    (record, kept)
}

/// Runs every `(κ, θ)` cell; cells are independent and may run in parallel.
/// Per-cell failures are recorded as flags.
pub fn sweep_grid(config: &SweepConfig) -> Result<GridResult, ExperimentError> {
    config.validate()?;
    let cells: Vec<(f64, f64)> = config
        .kappa_values
        .iter()
        .flat_map(|&k| config.theta_values.iter().map(move |&t| (k, t)))
        .collect();
    let (records, states): (Vec<_>, Vec<_>) = cells
        .par_iter()
        .map(|&(k, t)| run_cell(config, k, t))
        .unzip();
    Ok(GridResult {
        records,
        kappa_len: config.kappa_values.len(),
        theta_len: config.theta_values.len(),
        states: config.retain_states.then(|| states.into_iter().map(Option::unwrap_or_default).collect()),
    })
}

/// Piecewise-linear curve `θ = L(κ)` through its knots, extended linearly past the end knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCurve {
    pub name: String,
    /// `(κ, θ)` pairs with strictly ascending κ.
    pub knots: Vec<(f64, f64)>,
}

impl BoundCurve {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let field = |what: &str| format!("curve {}: {what}", self.name);
        if self.knots.is_empty() {
            return Err(ExperimentError::config(field("knots"), "need at least one knot"));
        }
        if self.knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(ExperimentError::config(field("knots"), "kappa must be strictly ascending"));
        }
        if let Some(i) = self.knots.iter().position(|&(_, t)| !(0.0..=PI).contains(&t)) {
            return Err(ExperimentError::config(field(&format!("knots[{i}]")), "theta must lie in [0, pi]"));
        }
        Ok(())
    }

    pub fn eval(&self, kappa: f64) -> f64 {
        let k = &self.knots;
        if k.len() == 1 {
            return k[0].1;
        }
        let seg = k.partition_point(|&(x, _)| x <= kappa).clamp(1, k.len() - 1);
        let ((x0, y0), (x1, y1)) = (k[seg - 1], k[seg]);
        y0 + (kappa - x0) * (y1 - y0) / (x1 - x0)
    }
}

/// Φ values of usable cells below (or on) and above `curve`.
pub fn partition_by_curve(grid: &GridResult, curve: &BoundCurve) -> Result<(Vec<f64>, Vec<f64>), ExperimentError> {
    curve.validate()?;
    let mut below = Vec::new();
    let mut above = Vec::new();
    for r in &grid.records {
        let Some(phi) = r.usable_phi() else { continue };
        let bound = curve.eval(r.kappa);
        if r.theta < bound || (r.theta - bound).abs() < ON_CURVE_TOL {
            below.push(phi);
        } else {
            above.push(phi);
        }
    }
    if below.len() < 2 || above.len() < 2 {
        return Err(ExperimentError::EmptyPartition {
            curve: curve.name.clone(),
            below: below.len(),
            above: above.len(),
        });
    }
    Ok((below, above))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveOverlap {
    pub name: String,
    pub overlap: f64,
    pub n_below: usize,
    pub n_above: usize,
    pub density_below: DensityCurve,
    pub density_above: DensityCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSelection {
    pub winner: String,
    pub overlaps: Vec<f64>,
    pub curves: Vec<CurveOverlap>,
}

/// Picks the curve whose below/above Φ densities overlap least; ties go to the first listed.
pub fn select_bound_curve(
    grid: &GridResult,
    curves: &[BoundCurve],
    grid_points: usize,
) -> Result<BoundSelection, ExperimentError> {
    if curves.len() < 2 {
        return Err(ExperimentError::config("curves", format!("need at least 2 curves, got {}", curves.len())));
    }
    let mut results = Vec::with_capacity(curves.len());
    for curve in curves {
        let (below, above) = partition_by_curve(grid, curve)?;
        let kde_err = |source| ExperimentError::Kde { curve: curve.name.clone(), source };
        let density_below = kde::ksdensity(&below, grid_points).map_err(kde_err)?;
        let density_above = kde::ksdensity(&above, grid_points).map_err(kde_err)?;
        results.push(CurveOverlap {
            name: curve.name.clone(),
            overlap: kde::overlap_proportion(&density_below, &density_above),
            n_below: below.len(),
            n_above: above.len(),
            density_below,
            density_above,
        });
    }
    let mut best = 0;
    for (i, c) in results.iter().enumerate() {
        if c.overlap < results[best].overlap {
            best = i;
        }
    }
    Ok(BoundSelection {
        winner: results[best].name.clone(),
        overlaps: results.iter().map(|c| c.overlap).collect(),
        curves: results,
    })
}

/// Φ for a measurement given as a single `(κ, θ)` point, as used by `measure`.
pub fn phi_of(result: &measure::MeasureResult) -> Option<f64> {
    match result.phi {
        Phi::Value(v) => Some(v),
        Phi::Flagged(_) => None,
    }
}
