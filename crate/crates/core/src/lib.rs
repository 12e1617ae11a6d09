//! Desk-scale simulation of a vortex-based microwave circulator.
//!
//! The central element is a ring of three superconducting islands, each tied
//! to its neighbours and to ground by identical Josephson junctions and threaded
//! by a magnetic flux. The crate builds that circuit in a truncated Cooper-pair
//! charge basis, diagonalizes it, inspects the persistent-current (vortex)
//! structure of its low-lying states, and couples it through three resonators
//! to transmission lines to obtain the single-photon scattering matrix.
//!
//! Module map:
//!
//! * [`charge_basis`]: circuit parameters, capacitance algebra, operators.
//! * [`spectral`]: diagonalization, flux sweeps, truncation checks.
//! * [`vortex`]: loop currents, matrix-element phases, circulation direction.
//! * [`scattering`]: coupling matrix `T(ω)`, phase difference, target search,
//!   external tuning and the S-matrix.
//! * [`noise`]: Monte Carlo charge and flux disorder studies.
//!
//! Energies are stored as ordinary frequencies in GHz (`E/h`) throughout, and
//! time evolution uses `e^{-iεt}` with `ε` in those units.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod charge_basis;
mod error;
pub mod noise;
pub mod scattering;
pub mod spectral;
pub mod vortex;

pub use charge_basis::{
    build_capacitance, build_hamiltonian, number_ops, shift_op, voltage_ops, CapacitanceAlgebra, ChargeBasis,
    CircuitParams, OperatorRep,
};
pub use error::{Error, Result};
pub use noise::{NoiseConfig, NoiseKind, NoiseStudy};
pub use scattering::{
    CouplingKernel, CouplingResponse, Direction, ExternalParams, PhaseProfile, SMatrixSpectrum, Target,
};
pub use spectral::{diagonalize, Spectrum};

/// Complex scalar used for every operator and response function.
pub type C64 = num_complex::Complex64;
