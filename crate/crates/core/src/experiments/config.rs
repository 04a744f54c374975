//! TOML run configuration and bound-curve files.
//!
//! ```toml
//! seed = 2019
//!
//! [state]
//! rho0 = [[0.8, 0.4], [0.4, 0.2]]
//!
//! [simulation]
//! n = 1000
//! duration = 200.0
//! dt = 0.01
//!
//! [measurement]
//! kappa1 = 0.01
//! theta = 0.785
//!
//! [sweep]
//! kappa = [0.001, 0.01]
//! theta = [0.0, 0.785, 1.571]
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;

use super::{default_thetas, BoundCurve, ExperimentError, SweepConfig, DEFAULT_KAPPAS};
use crate::clustering::{KMeansOptions, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
use crate::kde::DEFAULT_GRID_POINTS;
use crate::measure::MeasureParams;
use crate::qubit::DensityMatrix;
use crate::sme::{MeasurementConfig, Scheme, DEFAULT_DT};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    state: StateSection,
    #[serde(default)]
    simulation: SimulationSection,
    measurement: Option<PointSection>,
    #[serde(default)]
    sweep: AxesSection,
    #[serde(default)]
    measure: MeasureParams,
    #[serde(default)]
    kmeans: KMeansSection,
    #[serde(default)]
    bound_select: BoundSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateSection {
    rho0: [[f64; 2]; 2],
    #[serde(default)]
    rho0_imag: [[f64; 2]; 2],
}

impl Default for StateSection {
    fn default() -> Self {
        StateSection { rho0: [[0.8, 0.4], [0.4, 0.2]], rho0_imag: [[0.0; 2]; 2] }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub n: usize,
    pub duration: f64,
    pub dt: f64,
    pub scheme: Scheme,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection { n: 1000, duration: 200.0, dt: DEFAULT_DT, scheme: Scheme::default() }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointSection {
    kappa1: f64,
    /// Defaults to `kappa1`.
    kappa2: Option<f64>,
    theta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxesSection {
    #[serde(default = "default_kappas")]
    kappa: Vec<f64>,
    #[serde(default = "default_thetas")]
    theta: Vec<f64>,
}

fn default_kappas() -> Vec<f64> {
    DEFAULT_KAPPAS.to_vec()
}

impl Default for AxesSection {
    fn default() -> Self {
        AxesSection { kappa: default_kappas(), theta: default_thetas() }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct KMeansSection {
    tolerance: f64,
    max_iter: usize,
    restarts: usize,
}

impl Default for KMeansSection {
    fn default() -> Self {
        KMeansSection { tolerance: DEFAULT_TOLERANCE, max_iter: DEFAULT_MAX_ITER, restarts: 1 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BoundSection {
    grid: Option<PathBuf>,
    grid_points: usize,
}

impl Default for BoundSection {
    fn default() -> Self {
        BoundSection { grid: None, grid_points: DEFAULT_GRID_POINTS }
    }
}

/// Validated contents of a run configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub rho0: DensityMatrix,
    pub n: usize,
    /// Single measurement point for `simulate` and `measure`.
    pub measurement: Option<MeasurementConfig>,
    pub sweep: SweepConfig,
    pub params: MeasureParams,
    pub kmeans: KMeansOptions,
    /// Existing grid file for `bound-select`, resolved against the config's directory.
    pub grid_file: Option<PathBuf>,
    pub grid_points: usize,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<RunConfig, ExperimentError> {
        let file: FileConfig =
            toml::from_str(text).map_err(|e| ExperimentError::config("config", e.to_string()))?;
        let entries = [0, 1].map(|i| {
            [0, 1].map(|j| Complex64::new(file.state.rho0[i][j], file.state.rho0_imag[i][j]))
        });
        let rho0 = DensityMatrix::new(entries).map_err(|e| ExperimentError::config("state.rho0", e.to_string()))?;

        let sim = file.simulation;
        if sim.n < 2 {
            return Err(ExperimentError::config("simulation.n", "must be >= 2"));
        }
        let template = |kappa1: f64, kappa2: f64, theta: f64| MeasurementConfig {
            kappa1,
            kappa2,
            theta,
            duration: sim.duration,
            dt: sim.dt,
            seed: file.seed,
            scheme: sim.scheme,
        };
        let measurement = match file.measurement {
            Some(p) => {
                let cfg = template(p.kappa1, p.kappa2.unwrap_or(p.kappa1), p.theta);
                cfg.validate().map_err(|e| ExperimentError::config("measurement", e.to_string()))?;
                Some(cfg)
            }
            None => None,
        };
        template(0.0, 0.0, 0.0)
            .validate()
            .map_err(|e| ExperimentError::config("simulation", e.to_string()))?;

        file.measure.validate().map_err(|e| ExperimentError::config("measure", e.to_string()))?;
        let kmeans = KMeansOptions {
            tolerance: file.kmeans.tolerance,
            max_iter: file.kmeans.max_iter,
            seed: file.seed,
            restarts: file.kmeans.restarts,
        };
        if !(kmeans.tolerance > 0.0) {
            return Err(ExperimentError::config("kmeans.tolerance", "must be > 0"));
        }
        if kmeans.max_iter == 0 {
            return Err(ExperimentError::config("kmeans.max_iter", "must be >= 1"));
        }
        if kmeans.restarts == 0 {
            return Err(ExperimentError::config("kmeans.restarts", "must be >= 1"));
        }
        if file.bound_select.grid_points < 2 {
            return Err(ExperimentError::config("bound_select.grid_points", "must be >= 2"));
        }

        let sweep = SweepConfig {
            rho0,
            kappa_values: file.sweep.kappa,
            theta_values: file.sweep.theta,
            base: template(0.0, 0.0, 0.0),
            n: sim.n,
            params: file.measure,
            kmeans,
            retain_states: false,
        };
        sweep.validate()?;

        Ok(RunConfig {
            seed: file.seed,
            rho0,
            n: sim.n,
            measurement,
            sweep,
            params: file.measure,
            kmeans,
            grid_file: file.bound_select.grid.map(|g| base_dir.join(g)),
            grid_points: file.bound_select.grid_points,
        })
    }

    pub fn load(path: &Path) -> Result<RunConfig, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::config("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn require_measurement(&self) -> Result<MeasurementConfig, ExperimentError> {
        self.measurement
            .ok_or_else(|| ExperimentError::config("measurement", "section required for this command"))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveFile {
    curve: Vec<BoundCurve>,
}

/// Parses `[[curve]]` tables with `name` and `knots = [[κ, θ], …]`.
pub fn parse_curves(text: &str) -> Result<Vec<BoundCurve>, ExperimentError> {
    let file: CurveFile =
        toml::from_str(text).map_err(|e| ExperimentError::config("curves", e.to_string()))?;
    let mut seen = HashSet::new();
    for c in &file.curve {
        c.validate()?;
        if !seen.insert(c.name.as_str()) {
            return Err(ExperimentError::config(format!("curve {}", c.name), "duplicate name"));
        }
    }
    Ok(file.curve)
}

pub fn load_curves(path: &Path) -> Result<Vec<BoundCurve>, ExperimentError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ExperimentError::config("curves", format!("{}: {e}", path.display())))?;
    parse_curves(&text)
}
