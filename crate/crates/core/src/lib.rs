//! Simulation engine for a flux-tunable, SQUID-terminated multimode waveguide bus
//! that mediates parametric photon exchange between transmon qubits.
//!
//! Internal units: angular frequency in rad/ns, time in ns, lengths in m,
//! speeds in m/ns. Public constructors that take device data use GHz and m/s
//! and convert once at the boundary (see [`units`]).
//!
//! Modules:
//! - [`circuit`]: DC boundary-value problem, mode spectrum, reflection phase, fitting.
//! - [`sideband`]: Fourier-space modulation matrices, driven resonance, sideband amplitudes.
//! - [`effective`]: time-dependent Schrieffer-Wolff couplings, ZZ, multimode model.
//! - [`dynamics`]: brute-force Schrodinger and Lindblad evolution, chevrons, routing.
//! - [`tomography`]: fSim algebra, process tomography, phase calibration, readout correction.
//! - [`allocation`]: maximin frequency allocation around a bus mode.

pub mod allocation;
pub mod circuit;
pub mod dynamics;
pub mod effective;
pub mod error;
pub mod numerics;
pub mod sideband;
pub mod special;
pub mod tomography;
pub mod units;

pub use error::{BusError, Result};
