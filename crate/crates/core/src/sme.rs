//! Diffusive stochastic master equation for one or two continuously
//! monitored observables,
//!
//! ```text
//! dρ = Σ_i −κ_i [A_i, [A_i, ρ]] dt + √(2κ_i) (A_i ρ + ρ A_i − 2 Tr(A_i ρ) ρ) dW_i
//! ```
//!
//! integrated in Bloch form. With `A = n·σ` the two terms become
//! `−4κ (r − n(n·r)) dt` and `2√(2κ) (n − (n·r) r) dW`.
//!
//! Two single-step schemes are provided. [`Scheme::EulerMaruyama`] is the
//! literal Itô discretization. [`Scheme::Kraus`] applies the measurement
//! operator `M = (1 − Σκ_i dt) I + Σ √(2κ_i) dy_i A_i` for the innovation
//! records `dy_i = dW_i + 2√(2κ_i) Tr(A_i ρ) dt` and renormalizes; it agrees
//! with Euler–Maruyama to first order and always maps the Bloch ball into
//! itself, so pure states stay pure. Trajectories use `Kraus` unless the
//! configuration says otherwise.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qubit::{dot, BlochVector, DensityMatrix, Observable, QubitError, Vec3};

/// Largest accepted `κ·dt` for a single step.
pub const STABILITY_LIMIT: f64 = 0.1;

pub const DEFAULT_DT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmeError {
    #[error("{field}: κ·dt = {kdt} exceeds the stability limit {STABILITY_LIMIT}")]
    StabilityViolation { field: &'static str, kdt: f64 },
    #[error("invalid measurement config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("ensemble size must be at least 2, got {0}")]
    EnsembleTooSmall(usize),
    #[error(transparent)]
    Qubit(#[from] QubitError),
    #[error("final-state CSV: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Kraus,
    EulerMaruyama,
}

/// One measurement `M`: two detectors on `σz` and `sin θ σx + cos θ σz`.
///
/// Strengths are in 1/μs, times in μs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    pub kappa1: f64,
    pub kappa2: f64,
    pub theta: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
}

fn default_duration() -> f64 {
    200.0
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

impl MeasurementConfig {
    /// Two identical detectors of strength `kappa` at angle `theta`, `T = 200 μs`.
    pub fn symmetric(kappa: f64, theta: f64) -> Self {
        MeasurementConfig {
            kappa1: kappa,
            kappa2: kappa,
            theta,
            duration: default_duration(),
            dt: DEFAULT_DT,
            seed: 0,
            scheme: Scheme::Kraus,
        }
    }

    pub fn validate(&self) -> Result<(), SmeError> {
        let bad = |field, reason: &str| {
            Err(SmeError::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.kappa1 >= 0.0 && self.kappa1.is_finite()) {
            return bad("kappa1", "must be finite and >= 0");
        }
        if !(self.kappa2 >= 0.0 && self.kappa2.is_finite()) {
            return bad("kappa2", "must be finite and >= 0");
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("duration", "must be finite and > 0");
        }
        if !(self.dt > 0.0 && self.dt <= self.duration) {
            return bad("dt", "must satisfy 0 < dt <= duration");
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.theta) {
            return bad("theta", "must lie in [0, pi]");
        }
        check_stability("kappa1", self.kappa1, self.dt)?;
        check_stability("kappa2", self.kappa2, self.dt)
    }

    pub fn observables(&self) -> [Observable; 2] {
        [Observable::sigma_z(), Observable::from_angle(self.theta)]
    }

    /// Number of integrator steps; the last one is shortened to land on `duration`.
    pub fn steps(&self) -> usize {
        let ratio = self.duration / self.dt;
        let n = (ratio - 1e-9 * ratio.max(1.0)).ceil();
        (n as usize).max(1)
    }
}

fn check_stability(field: &'static str, kappa: f64, dt: f64) -> Result<(), SmeError> {
    let kdt = kappa * dt;
    if kdt > STABILITY_LIMIT {
        Err(SmeError::StabilityViolation { field, kdt })
    } else {
        Ok(())
    }
}

/// One detector channel for a step: axis, strength and Wiener increment.
#[derive(Clone, Copy)]
struct Channel {
    axis: Vec3,
    kappa: f64,
    dw: f64,
}

fn em_increment(r: &Vec3, ch: &Channel, dt: f64) -> Vec3 {
    let n = &ch.axis;
    let c = dot(n, r);
    let drift = -4.0 * ch.kappa * dt;
    let diff = 2.0 * (2.0 * ch.kappa).sqrt() * ch.dw;
    [
        drift * (r[0] - n[0] * c) + diff * (n[0] - c * r[0]),
        drift * (r[1] - n[1] * c) + diff * (n[1] - c * r[1]),
        drift * (r[2] - n[2] * c) + diff * (n[2] - c * r[2]),
    ]
}

fn em_raw(r: &Vec3, channels: &[Channel], dt: f64) -> Vec3 {
    let mut out = *r;
    for ch in channels.iter().filter(|c| c.kappa > 0.0) {
        let inc = em_increment(r, ch, dt);
        out[0] += inc[0];
        out[1] += inc[1];
        out[2] += inc[2];
    }
    out
}

fn kraus_raw(r: &Vec3, channels: &[Channel], dt: f64) -> Vec3 {
    // M = a·I + b·σ
    let mut a = 1.0;
    let mut b = [0.0; 3];
    for ch in channels.iter().filter(|c| c.kappa > 0.0) {
        let rate = 2.0 * ch.kappa;
        let amp = rate.sqrt();
        let dy = ch.dw + 2.0 * amp * dot(&ch.axis, r) * dt;
        a -= 0.5 * rate * dt;
        for k in 0..3 {
            b[k] += amp * dy * ch.axis[k];
        }
    }
    if b == [0.0; 3] {
        return *r;
    }
    // M ρ M = ½[(a² + |b|² + 2a b·r) I + (a² r + 2a b + 2(b·r) b − |b|² r)·σ]
    let br = dot(&b, r);
    let bb = dot(&b, &b);
    let norm = a * a + bb + 2.0 * a * br;
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[k] = ((a * a - bb) * r[k] + 2.0 * a * b[k] + 2.0 * br * b[k]) / norm;
    }
    out
}

impl Scheme {
    fn apply(self, r: &Vec3, channels: &[Channel], dt: f64) -> Vec3 {
        match self {
            Scheme::EulerMaruyama => em_raw(r, channels, dt),
            Scheme::Kraus => kraus_raw(r, channels, dt),
        }
    }

    /// Unprojected result of one two-detector step.
    pub fn step_dual_raw(
        self,
        r: &BlochVector,
        config: &MeasurementConfig,
        dt: f64,
        dw1: f64,
        dw2: f64,
    ) -> Result<Vec3, SmeError> {
        check_stability("kappa1", config.kappa1, dt)?;
        check_stability("kappa2", config.kappa2, dt)?;
        let [a1, a2] = config.observables();
        let channels = [
            Channel { axis: a1.axis(), kappa: config.kappa1, dw: dw1 },
            Channel { axis: a2.axis(), kappa: config.kappa2, dw: dw2 },
        ];
        Ok(self.apply(r.as_array(), &channels, dt))
    }

    pub fn step_single(
        self,
        r: &BlochVector,
        obs: &Observable,
        kappa: f64,
        dt: f64,
        dw: f64,
    ) -> Result<BlochVector, SmeError> {
        check_stability("kappa", kappa, dt)?;
        let ch = Channel { axis: obs.axis(), kappa, dw };
        Ok(BlochVector::project(self.apply(r.as_array(), &[ch], dt)))
    }

    pub fn step_dual(
        self,
        r: &BlochVector,
        config: &MeasurementConfig,
        dw1: f64,
        dw2: f64,
    ) -> Result<BlochVector, SmeError> {
        self.step_dual_raw(r, config, config.dt, dw1, dw2)
            .map(BlochVector::project)
    }
}

/// One Euler–Maruyama step for a single monitored observable.
pub fn step_single(
    r: &BlochVector,
    obs: &Observable,
    kappa: f64,
    dt: f64,
    dw: f64,
) -> Result<BlochVector, SmeError> {
    Scheme::EulerMaruyama.step_single(r, obs, kappa, dt, dw)
}

/// One Euler–Maruyama step with both detectors of `config` active.
pub fn step_dual(
    r: &BlochVector,
    config: &MeasurementConfig,
    dw1: f64,
    dw2: f64,
) -> Result<BlochVector, SmeError> {
    Scheme::EulerMaruyama.step_dual(r, config, dw1, dw2)
}

/// Counter-based sub-stream for trajectory `index` of an ensemble seeded by `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Per-step view passed to trajectory observers.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    /// State before the unit-ball projection.
    pub raw: Vec3,
    pub state: BlochVector,
}

pub fn simulate_trajectory<R: Rng>(
    rho0: &DensityMatrix,
    config: &MeasurementConfig,
    rng: &mut R,
) -> Result<BlochVector, SmeError> {
    simulate_trajectory_observed(rho0, config, rng, |_| {})
}

/// Like [`simulate_trajectory`], calling `observe` after every step.
pub fn simulate_trajectory_observed<R: Rng, F: FnMut(&StepRecord)>(
    rho0: &DensityMatrix,
    config: &MeasurementConfig,
    rng: &mut R,
    mut observe: F,
) -> Result<BlochVector, SmeError> {
    config.validate()?;
    let mut r = rho0.bloch();
    let steps = config.steps();
    let mut t = 0.0;
    for step in 0..steps {
        let dt = if step + 1 == steps {
            config.duration - config.dt * (steps - 1) as f64
        } else {
            config.dt
        };
        let sdt = dt.sqrt();
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let raw = config
            .scheme
            .step_dual_raw(&r, config, dt, sdt * z1, sdt * z2)?;
        r = BlochVector::project(raw);
        t = if step + 1 == steps {
            config.duration
        } else {
            t + dt
        };
        observe(&StepRecord { step, time: t, raw, state: r });
    }
    Ok(r)
}

/// The ensemble `R_f` of final states together with the measurement that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalStateSet {
    pub states: Vec<BlochVector>,
    pub config: MeasurementConfig,
}

impl std::ops::Deref for FinalStateSet {
    type Target = [BlochVector];
    fn deref(&self) -> &[BlochVector] {
        &self.states
    }
}

impl FinalStateSet {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SmeError> {
        write_states_csv(&self.states, out)
    }

    /// True when no two states differ.
    pub fn is_degenerate(&self) -> bool {
        self.states.windows(2).all(|w| w[0] == w[1])
    }
}

pub fn write_states_csv<W: Write>(states: &[BlochVector], out: W) -> Result<(), SmeError> {
    let csv_err = |e: csv::Error| SmeError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["traj_index", "rx", "ry", "rz"]).map_err(csv_err)?;
    for (k, s) in states.iter().enumerate() {
        w.write_record([
            k.to_string(),
            s.x().to_string(),
            s.y().to_string(),
            s.z().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| SmeError::Csv(e.to_string()))
}

pub fn read_states_csv<R: Read>(input: R) -> Result<Vec<BlochVector>, SmeError> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers().map_err(|e| SmeError::Csv(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["traj_index", "rx", "ry", "rz"] {
        return Err(SmeError::Csv(format!("unexpected header {headers:?}")));
    }
    let mut states = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| SmeError::Csv(e.to_string()))?;
        let num = |i: usize| -> Result<f64, SmeError> {
            rec[i]
                .parse()
                .map_err(|_| SmeError::Csv(format!("row {}: bad number {:?}", line + 1, &rec[i])))
        };
        states.push(BlochVector::new(num(1)?, num(2)?, num(3)?)?);
    }
    Ok(states)
}

/// Runs `n` independent trajectories; trajectory `k` draws from
/// `trajectory_rng(config.seed, k)`, so the result does not depend on how
/// the work is scheduled across threads.
pub fn simulate_ensemble(
    rho0: &DensityMatrix,
    config: &MeasurementConfig,
    n: usize,
) -> Result<FinalStateSet, SmeError> {
    if n < 2 {
        return Err(SmeError::EnsembleTooSmall(n));
    }
    config.validate()?;
    let states = (0..n as u64)
        .into_par_iter()
        .map(|k| simulate_trajectory(rho0, config, &mut trajectory_rng(config.seed, k)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FinalStateSet { states, config: *config })
}
