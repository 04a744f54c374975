//! Two-cluster Lloyd iteration on Bloch vectors.
//!
//! Initial centroids are two distinct data points drawn uniformly at random.
//! Iteration stops once no centroid moves by `tolerance` or more, or after
//! `max_iter` updates.

use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qubit::{dist2, BlochVector, Vec3};

pub const K: usize = 2;
pub const DEFAULT_TOLERANCE: f64 = 0.01;
pub const DEFAULT_MAX_ITER: usize = 100;

// Redraws of the random initial pair before falling back to a deterministic pick.
const MAX_INIT_DRAWS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("degenerate input: need at least 2 distinct points among {0}")]
    DegenerateInput(usize),
    #[error("cluster index {0} out of range (K = 2)")]
    IndexOutOfRange(usize),
    #[error("invalid k-means option {field}: {reason}")]
    InvalidOption { field: &'static str, reason: String },
    #[error("cluster IO: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub tolerance: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub assignments: Vec<usize>,
    pub centroids: [BlochVector; K],
    pub iterations: usize,
    pub converged: bool,
    /// Within-cluster sum of squared distances after each assignment pass.
    pub objective_history: Vec<f64>,
}

impl ClusterResult {
    pub fn sizes(&self) -> [usize; K] {
        let mut n = [0; K];
        for &a in &self.assignments {
            n[a] += 1;
        }
        n
    }

    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }

    /// Same partition with labels 0 and 1 exchanged.
    pub fn swapped(&self) -> ClusterResult {
        ClusterResult {
            assignments: self.assignments.iter().map(|a| 1 - a).collect(),
            centroids: [self.centroids[1], self.centroids[0]],
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ClusterError> {
        let err = |e: csv::Error| ClusterError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["traj_index", "cluster"]).map_err(err)?;
        for (k, a) in self.assignments.iter().enumerate() {
            w.write_record([k.to_string(), a.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| ClusterError::Io(e.to_string()))
    }

    /// JSON sidecar with everything except the per-point labels.
    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({
            "centroids": self.centroids,
            "iterations": self.iterations,
            "converged": self.converged,
            "objective": self.objective(),
        })
    }
}

fn nearest(p: &Vec3, centroids: &[Vec3; K]) -> (usize, f64) {
    let d0 = dist2(p, &centroids[0]);
    let d1 = dist2(p, &centroids[1]);
    // ties go to the lower index
    if d1 < d0 {
        (1, d1)
    } else {
        (0, d0)
    }
}

fn assign(points: &[BlochVector], centroids: &[Vec3; K], labels: &mut [usize]) -> f64 {
    let mut objective = 0.0;
    for (p, label) in points.iter().zip(labels.iter_mut()) {
        let (c, d) = nearest(p.as_array(), centroids);
        *label = c;
        objective += d;
    }
    objective
}

fn means(points: &[BlochVector], labels: &[usize]) -> [Option<Vec3>; K] {
    let mut sum = [[0.0; 3]; K];
    let mut count = [0usize; K];
    for (p, &l) in points.iter().zip(labels) {
        for (s, v) in sum[l].iter_mut().zip(p.as_array()) {
            *s += v;
        }
        count[l] += 1;
    }
    let mut out = [None; K];
    for c in 0..K {
        if count[c] > 0 {
            let n = count[c] as f64;
            out[c] = Some([sum[c][0] / n, sum[c][1] / n, sum[c][2] / n]);
        }
    }
    out
}

fn farthest_from(points: &[BlochVector], from: &Vec3) -> Vec3 {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = dist2(p.as_array(), from);
        if d > best.1 {
            best = (i, d);
        }
    }
    *points[best.0].as_array()
}

fn first_distinct_pair(points: &[BlochVector]) -> Option<(usize, usize)> {
    let first = points.first()?;
    points.iter().position(|p| p != first).map(|j| (0, j))
}

/// Random initial pair of distinct points; redraws when the picks coincide.
fn initial_pair(points: &[BlochVector], rng: &mut ChaCha8Rng) -> Result<[Vec3; K], ClusterError> {
    let fallback = first_distinct_pair(points).ok_or(ClusterError::DegenerateInput(points.len()))?;
    for _ in 0..MAX_INIT_DRAWS {
        let pick = index::sample(rng, points.len(), K);
        let (i, j) = (pick.index(0), pick.index(1));
        if points[i] != points[j] {
            return Ok([*points[i].as_array(), *points[j].as_array()]);
        }
    }
    Ok([*points[fallback.0].as_array(), *points[fallback.1].as_array()])
}

fn validate(points: &[BlochVector], opts: &KMeansOptions) -> Result<(), ClusterError> {
    if !(opts.tolerance > 0.0) {
        return Err(ClusterError::InvalidOption {
            field: "tolerance",
            reason: "must be > 0".into(),
        });
    }
    if opts.restarts == 0 {
        return Err(ClusterError::InvalidOption {
            field: "restarts",
            reason: "must be >= 1".into(),
        });
    }
    if points.len() < K || first_distinct_pair(points).is_none() {
        return Err(ClusterError::DegenerateInput(points.len()));
    }
    Ok(())
}

/// Lloyd iteration from the given initial centroids.
pub fn kmeans_from(
    points: &[BlochVector],
    init: [BlochVector; K],
    tolerance: f64,
    max_iter: usize,
) -> Result<ClusterResult, ClusterError> {
    validate(points, &KMeansOptions { tolerance, max_iter, ..Default::default() })?;
    Ok(lloyd(points, [*init[0].as_array(), *init[1].as_array()], tolerance, max_iter))
}

fn lloyd(points: &[BlochVector], mut centroids: [Vec3; K], tolerance: f64, max_iter: usize) -> ClusterResult {
    let mut labels = vec![0; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        history.push(assign(points, &centroids, &mut labels));
        let updated = means(points, &labels);
        let mut next = centroids;
        for c in 0..K {
            next[c] = match updated[c] {
                Some(m) => m,
                None => farthest_from(points, &centroids[1 - c]),
            };
        }
        let shift = (0..K)
            .map(|c| dist2(&next[c], &centroids[c]).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        iterations += 1;
        if shift < tolerance {
            converged = true;
            break;
        }
    }
    // Final labels refer to the final centroids.
    history.push(assign(points, &centroids, &mut labels));

    ClusterResult {
        assignments: labels,
        centroids: centroids.map(BlochVector::from_ball),
        iterations,
        converged,
        objective_history: history,
    }
}

/// Two-cluster k-means; restart `r` draws its initial pair from the
/// sub-stream `(seed, r)` and the lowest final objective wins.
pub fn kmeans(points: &[BlochVector], opts: &KMeansOptions) -> Result<ClusterResult, ClusterError> {
    validate(points, opts)?;
    let mut best: Option<ClusterResult> = None;
    for restart in 0..opts.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(restart as u64);
        let init = initial_pair(points, &mut rng)?;
        let result = lloyd(points, init, opts.tolerance, opts.max_iter);
        if best.as_ref().is_none_or(|b| result.objective() < b.objective()) {
            best = Some(result);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Members of cluster `i`, in input order.
pub fn subset(points: &[BlochVector], result: &ClusterResult, i: usize) -> Result<Vec<BlochVector>, ClusterError> {
    if i >= K {
        return Err(ClusterError::IndexOutOfRange(i));
    }
    Ok(points
        .iter()
        .zip(&result.assignments)
        .filter(|(_, &a)| a == i)
        .map(|(p, _)| *p)
        .collect())
}
