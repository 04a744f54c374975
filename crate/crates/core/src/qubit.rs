//! Qubit states and the x–z observable family.
//!
//! Dynamics work on [`BlochVector`]s, which keep Hermiticity and unit trace
//! by construction. [`DensityMatrix`] is the boundary type used for initial
//! states and serialization.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Radial slack allowed outside the unit ball before a vector is rejected.
pub const NORM_SLACK: f64 = 1e-6;

const HERMITIAN_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QubitError {
    #[error("Bloch vector norm {norm} exceeds 1 + {NORM_SLACK}")]
    NormViolation { norm: f64 },
    #[error("density matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("density matrix trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("density matrix has negative eigenvalue {0}")]
    NotPositive(f64),
    #[error("non-finite component in qubit state")]
    NonFinite,
}

pub(crate) type Vec3 = [f64; 3];

#[inline]
pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    dot(&d, &d)
}

/// Real Bloch vector `r` with `ρ = (I + r·σ)/2`.
///
/// Constructed through [`BlochVector::new`], which enforces `‖r‖ ≤ 1 + NORM_SLACK`
/// and projects vectors in the slack band back onto the unit sphere.
#[derive(Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct BlochVector([f64; 3]);

impl BlochVector {
    pub const ORIGIN: BlochVector = BlochVector([0.0, 0.0, 0.0]);

    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, QubitError> {
        Self::from_array([x, y, z])
    }

    pub fn from_array(r: Vec3) -> Result<Self, QubitError> {
        if r.iter().any(|c| !c.is_finite()) {
            return Err(QubitError::NonFinite);
        }
        let norm = dot(&r, &r).sqrt();
        if norm > 1.0 + NORM_SLACK {
            return Err(QubitError::NormViolation { norm });
        }
        Ok(Self::project(r))
    }

    /// Radially projects any vector with norm above one onto the unit sphere.
    pub(crate) fn project(r: Vec3) -> Self {
        let n2 = dot(&r, &r);
        if n2 > 1.0 {
            let n = n2.sqrt();
            BlochVector([r[0] / n, r[1] / n, r[2] / n])
        } else {
            BlochVector(r)
        }
    }

    /// Wraps a vector already known to lie in the ball (e.g. a mean of members).
    pub(crate) fn from_ball(r: Vec3) -> Self {
        debug_assert!(dot(&r, &r).sqrt() <= 1.0 + NORM_SLACK);
        BlochVector(r)
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.0[0]
    }
    #[inline]
    pub fn y(&self) -> f64 {
        self.0[1]
    }
    #[inline]
    pub fn z(&self) -> f64 {
        self.0[2]
    }

    #[inline]
    pub fn as_array(&self) -> &Vec3 {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn distance_squared(&self, other: &BlochVector) -> f64 {
        dist2(&self.0, &other.0)
    }

    pub fn to_density(&self) -> DensityMatrix {
        let [x, y, z] = self.0;
        DensityMatrix {
            entries: [
                [Complex64::new((1.0 + z) / 2.0, 0.0), Complex64::new(x / 2.0, -y / 2.0)],
                [Complex64::new(x / 2.0, y / 2.0), Complex64::new((1.0 - z) / 2.0, 0.0)],
            ],
        }
    }
}

impl fmt::Debug for BlochVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bloch({}, {}, {})", self.0[0], self.0[1], self.0[2])
    }
}

impl TryFrom<[f64; 3]> for BlochVector {
    type Error = QubitError;
    fn try_from(r: [f64; 3]) -> Result<Self, Self::Error> {
        Self::from_array(r)
    }
}

impl From<BlochVector> for [f64; 3] {
    fn from(b: BlochVector) -> Self {
        b.0
    }
}

/// 2×2 qubit density matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct DensityMatrix {
    entries: [[Complex64; 2]; 2],
}

/// Wire form: rows of `[re, im]` pairs, or a flat row-major list of four pairs.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixRepr {
    Nested([[[f64; 2]; 2]; 2]),
    Flat([[f64; 2]; 4]),
}

impl TryFrom<MatrixRepr> for DensityMatrix {
    type Error = QubitError;
    fn try_from(m: MatrixRepr) -> Result<Self, Self::Error> {
        let p = match m {
            MatrixRepr::Nested(rows) => [rows[0][0], rows[0][1], rows[1][0], rows[1][1]],
            MatrixRepr::Flat(p) => p,
        };
        let c = |q: [f64; 2]| Complex64::new(q[0], q[1]);
        DensityMatrix::new([[c(p[0]), c(p[1])], [c(p[2]), c(p[3])]])
    }
}

impl From<DensityMatrix> for MatrixRepr {
    fn from(d: DensityMatrix) -> Self {
        let e = d.entries;
        let p = |c: Complex64| [c.re, c.im];
        MatrixRepr::Nested([[p(e[0][0]), p(e[0][1])], [p(e[1][0]), p(e[1][1])]])
    }
}

impl DensityMatrix {
    pub fn new(entries: [[Complex64; 2]; 2]) -> Result<Self, QubitError> {
        if entries.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(QubitError::NonFinite);
        }
        let herm = (entries[1][0] - entries[0][1].conj())
            .norm()
            .max(entries[0][0].im.abs())
            .max(entries[1][1].im.abs());
        if herm > HERMITIAN_TOL {
            return Err(QubitError::NotHermitian(herm));
        }
        let trace = entries[0][0].re + entries[1][1].re;
        if (trace - 1.0).abs() > HERMITIAN_TOL {
            return Err(QubitError::BadTrace(trace));
        }
        // Eigenvalues of a unit-trace Hermitian 2×2 are (1 ± ‖r‖)/2.
        let rho = DensityMatrix { entries };
        let min_eig = (1.0 - rho.bloch_components_norm()) / 2.0;
        if min_eig < -PSD_TOL {
            return Err(QubitError::NotPositive(min_eig));
        }
        Ok(rho)
    }

    /// Real symmetric matrix `[a, b; b, d]`.
    pub fn real(a: f64, b: f64, d: f64) -> Result<Self, QubitError> {
        let c = |v| Complex64::new(v, 0.0);
        Self::new([[c(a), c(b)], [c(b), c(d)]])
    }

    pub fn maximally_mixed() -> Self {
        BlochVector::ORIGIN.to_density()
    }

    pub fn entries(&self) -> &[[Complex64; 2]; 2] {
        &self.entries
    }

    fn bloch_components(&self) -> Vec3 {
        let e = &self.entries;
        // Tr(ρσx) = 2 Re ρ01, Tr(ρσy) = -2 Im ρ01, Tr(ρσz) = ρ00 - ρ11
        [2.0 * e[0][1].re, 0.0 - 2.0 * e[0][1].im, e[0][0].re - e[1][1].re]
    }

    fn bloch_components_norm(&self) -> f64 {
        let r = self.bloch_components();
        dot(&r, &r).sqrt()
    }

    pub fn bloch(&self) -> BlochVector {
        // The PSD check admits norms up to 1 + 2e-9, inside the slack band.
        BlochVector::project(self.bloch_components())
    }
}

pub fn bloch_from_density(rho: &DensityMatrix) -> BlochVector {
    rho.bloch()
}

pub fn density_from_bloch(r: Vec3) -> Result<DensityMatrix, QubitError> {
    Ok(BlochVector::from_array(r)?.to_density())
}

/// `sin(angle)·σx + cos(angle)·σz`, eigenvalues ±1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observable {
    angle: f64,
    matrix: [[Complex64; 2]; 2],
}

impl Observable {
    pub fn from_angle(theta: f64) -> Self {
        let angle = theta.rem_euclid(TAU);
        let (s, c) = angle.sin_cos();
        let re = |v| Complex64::new(v, 0.0);
        Observable {
            angle,
            matrix: [[re(c), re(s)], [re(s), re(-c)]],
        }
    }

    pub fn sigma_z() -> Self {
        Self::from_angle(0.0)
    }

    pub fn sigma_x() -> Self {
        Self::from_angle(std::f64::consts::FRAC_PI_2)
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn matrix(&self) -> &[[Complex64; 2]; 2] {
        &self.matrix
    }

    /// Unit Bloch axis `n` with `A = n·σ`.
    pub fn axis(&self) -> Vec3 {
        [self.matrix[0][1].re, 0.0, self.matrix[0][0].re]
    }

    /// Bloch vectors of the +1 and −1 eigenstates.
    pub fn eigenstates(&self) -> [BlochVector; 2] {
        let n = self.axis();
        [BlochVector::from_ball(n), BlochVector::from_ball([-n[0], -n[1], -n[2]])]
    }
}

pub fn observable_from_angle(theta: f64) -> Observable {
    Observable::from_angle(theta)
}

/// `Tr(Aρ)`.
pub fn expectation(rho: &DensityMatrix, obs: &Observable) -> f64 {
    let a = &obs.matrix;
    let p = &rho.entries;
    let mut tr = Complex64::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            tr += a[i][j] * p[j][i];
        }
    }
    tr.re
}
