//! Coupling of the circuit to three resonators and their transmission lines.
//!
//! Port `p` (1-based in prose) couples through the voltage of island `p`; all
//! APIs index ports from 0. The coupling matrix is written as
//! `T = −i·[[β, α*, α], [α, β, α*], [α*, α, β]]` for cyclically symmetric
//! circuits, so `α = i·T₂₁` and `β = i·T₁₁`.

mod kernel;
mod phase;
mod smatrix;

pub use kernel::{t_matrix, CouplingKernel, CouplingResponse, POLE_GUARD_GHZ};
pub use phase::{
    find_targets, phase_difference, scan, Direction, PhaseProfile, Target, TargetKind, MAX_GRID_STEP,
    STATIONARY_TOLERANCE, TARGET_TOLERANCE_GHZ,
};
pub use smatrix::{
    bandwidth, bandwidth_around, power_to_db, s_at, s_matrix, tune_at, tune_external, Bandwidth, ExternalParams,
    SMatrixSpectrum, MAX_CONDITION,
};
