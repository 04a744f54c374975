//! Simulation and analysis of simultaneous continuous weak measurement of
//! two qubit observables, and a clustering-based geometric measure of how
//! non-commuting such a measurement is.

pub mod clustering;
pub mod experiments;
pub mod kde;
pub mod measure;
pub mod qubit;
pub mod sme;

pub use qubit::{BlochVector, DensityMatrix, Observable};
pub use sme::{FinalStateSet, MeasurementConfig, Scheme};
