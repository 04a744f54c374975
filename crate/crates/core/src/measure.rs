//! The geometric non-commutativity measure of a measurement `M`.
//!
//! Given the initial state and the two k-means subsets of the final states:
//!
//! ```text
//! P_i = argmin_{k ∈ R_fi} Σ_j ‖B_k − B_j‖²          (medoid)
//! D   = Σ_i ‖B(ρ0) − P_i‖²
//! V   = (1/N) Σ_i Σ_j ‖B_ij − mean_i‖²
//! Φ   = α V / (D (4 − D + γ)) − β
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{self, ClusterError, ClusterResult, KMeansOptions};
use crate::qubit::{dist2, BlochVector, DensityMatrix, Vec3};

/// Denominator magnitude below which Φ is reported as a flag.
pub const EPS_D: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("empty subset")]
    EmptySubset,
    #[error("invalid measure parameter {field}: {reason}")]
    InvalidParams { field: &'static str, reason: &'static str },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for MeasureParams {
    fn default() -> Self {
        MeasureParams { alpha: 1.0, beta: 0.0, gamma: 0.01 }
    }
}

impl MeasureParams {
    pub fn validate(&self) -> Result<(), MeasureError> {
        if !(self.alpha > 0.0) {
            return Err(MeasureError::InvalidParams { field: "alpha", reason: "must be > 0" });
        }
        if !(self.beta >= 0.0) {
            return Err(MeasureError::InvalidParams { field: "beta", reason: "must be >= 0" });
        }
        if !(self.gamma > 0.0) {
            return Err(MeasureError::InvalidParams { field: "gamma", reason: "must be > 0" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Flag {
    /// `D < EPS_D`: the final states never left the initial state.
    NearZeroD,
    /// `|4 − D + γ| < EPS_D`.
    Pole,
    /// `4 − D + γ ≤ −EPS_D`: past the pole, where Φ would change sign.
    BeyondPole,
    /// k-means hit `max_iter` before meeting the tolerance.
    NotConverged,
    /// No meaningful two-way split of the ensemble exists.
    DegenerateInput,
    /// The cell could not be simulated or measured.
    Failed,
}

impl Flag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Flag::NearZeroD => "NEAR_ZERO_D",
            Flag::Pole => "POLE",
            Flag::BeyondPole => "BEYOND_POLE",
            Flag::NotConverged => "NOT_CONVERGED",
            Flag::DegenerateInput => "DEGENERATE_INPUT",
            Flag::Failed => "FAILED",
        }
    }

    pub fn parse(s: &str) -> Option<Flag> {
        [Flag::NearZeroD, Flag::Pole, Flag::BeyondPole, Flag::NotConverged, Flag::DegenerateInput, Flag::Failed]
            .into_iter()
            .find(|f| f.as_str() == s)
    }

    /// Flags that leave Φ without a numeric value.
    pub fn voids_phi(&self) -> bool {
        !matches!(self, Flag::NotConverged)
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Φ, or the reason it has no value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phi {
    Value(f64),
    Flagged(Flag),
}

impl Phi {
    pub fn value(&self) -> Option<f64> {
        match self {
            Phi::Value(v) => Some(*v),
            Phi::Flagged(_) => None,
        }
    }
}

/// Member minimizing the summed squared distance to all members; ties go to the earliest.
pub fn medoid(subset: &[BlochVector]) -> Result<BlochVector, MeasureError> {
    // Σ_j ‖x_k − x_j‖² = n‖x_k − m‖² + Σ_j ‖x_j − m‖², so the argmin is the member nearest the mean.
    let m = mean(subset).ok_or(MeasureError::EmptySubset)?;
    let mut best = (0, f64::INFINITY);
    for (k, p) in subset.iter().enumerate() {
        let d = dist2(p.as_array(), &m);
        if d < best.1 {
            best = (k, d);
        }
    }
    Ok(subset[best.0])
}

fn mean(points: &[BlochVector]) -> Option<Vec3> {
    if points.is_empty() {
        return None;
    }
    let mut s = [0.0; 3];
    for p in points {
        for (a, v) in s.iter_mut().zip(p.as_array()) {
            *a += v;
        }
    }
    let n = points.len() as f64;
    Some([s[0] / n, s[1] / n, s[2] / n])
}

pub fn compute_d(rho0: &DensityMatrix, p1: &BlochVector, p2: &BlochVector) -> f64 {
    let b = rho0.bloch();
    b.distance_squared(p1) + b.distance_squared(p2)
}

pub fn compute_v(subsets: [&[BlochVector]; 2]) -> Result<f64, MeasureError> {
    let mut total = 0.0;
    let mut n = 0;
    for s in subsets {
        let m = mean(s).ok_or(MeasureError::EmptySubset)?;
        total += s.iter().map(|p| dist2(p.as_array(), &m)).sum::<f64>();
        n += s.len();
    }
    Ok(total / n as f64)
}

pub fn compute_phi(d: f64, v: f64, params: &MeasureParams) -> Phi {
    if d < EPS_D {
        return Phi::Flagged(Flag::NearZeroD);
    }
    let gap = 4.0 - d + params.gamma;
    if gap.abs() < EPS_D {
        return Phi::Flagged(Flag::Pole);
    }
    if gap < 0.0 {
        return Phi::Flagged(Flag::BeyondPole);
    }
    Phi::Value(params.alpha * v / (d * gap) - params.beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureResult {
    pub medoids: [BlochVector; 2],
    pub d: f64,
    pub v: f64,
    pub phi: Phi,
    pub cluster_sizes: [usize; 2],
    pub flags: Vec<Flag>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Serialize)]
struct MeasureRecord<'a> {
    #[serde(rename = "P1")]
    p1: BlochVector,
    #[serde(rename = "P2")]
    p2: BlochVector,
    #[serde(rename = "D")]
    d: f64,
    #[serde(rename = "V")]
    v: f64,
    phi: Option<f64>,
    #[serde(rename = "N1")]
    n1: usize,
    #[serde(rename = "N2")]
    n2: usize,
    flags: &'a [Flag],
    converged: bool,
}

impl MeasureResult {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(MeasureRecord {
            p1: self.medoids[0],
            p2: self.medoids[1],
            d: self.d,
            v: self.v,
            phi: self.phi.value(),
            n1: self.cluster_sizes[0],
            n2: self.cluster_sizes[1],
            flags: &self.flags,
            converged: self.converged,
        })
        .expect("measure record is always serializable")
    }
}

/// Measure from an already computed two-way split.
pub fn measure_subsets(
    rho0: &DensityMatrix,
    subsets: [&[BlochVector]; 2],
    params: &MeasureParams,
) -> Result<MeasureResult, MeasureError> {
    params.validate()?;
    let medoids = [medoid(subsets[0])?, medoid(subsets[1])?];
    let d = compute_d(rho0, &medoids[0], &medoids[1]);
    let v = compute_v(subsets)?;
    let phi = compute_phi(d, v, params);
    let flags = match phi {
        Phi::Flagged(f) => vec![f],
        Phi::Value(_) => Vec::new(),
    };
    Ok(MeasureResult {
        medoids,
        d,
        v,
        phi,
        cluster_sizes: [subsets[0].len(), subsets[1].len()],
        flags,
        converged: true,
        iterations: 0,
    })
}

/// k-means split of `final_states`, then medoids, D, V and Φ.
pub fn measure_pipeline(
    rho0: &DensityMatrix,
    final_states: &[BlochVector],
    kmeans: &KMeansOptions,
    params: &MeasureParams,
) -> Result<MeasureResult, MeasureError> {
    params.validate()?;
    let clusters = clustering::kmeans(final_states, kmeans)?;
    measure_clustered(rho0, final_states, &clusters, params)
}

/// Measure from a finished k-means run over `final_states`.
pub fn measure_clustered(
    rho0: &DensityMatrix,
    final_states: &[BlochVector],
    clusters: &ClusterResult,
    params: &MeasureParams,
) -> Result<MeasureResult, MeasureError> {
    let s1 = clustering::subset(final_states, clusters, 0)?;
    let s2 = clustering::subset(final_states, clusters, 1)?;
    let mut result = measure_subsets(rho0, [&s1, &s2], params)?;
    result.converged = clusters.converged;
    result.iterations = clusters.iterations;
    if !clusters.converged {
        result.flags.push(Flag::NotConverged);
        result.flags.sort();
    }
    Ok(result)
}
