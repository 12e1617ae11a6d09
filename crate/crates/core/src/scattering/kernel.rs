use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::charge_basis::{voltage_ops, CircuitParams, OperatorRep};
use crate::spectral::{diagonalize_all, Spectrum};
use crate::{Error, Result, C64};

/// Default minimum distance (GHz) between a real evaluation frequency and a pole.
pub const POLE_GUARD_GHZ: f64 = 1e-6;

/// Pole expansion of the coupling matrix,
/// `T_jk(z) = Σₙ ⟨G|B̂ⱼ|εₙ⟩⟨εₙ|B̂ₖ|G⟩ / (iz − i(εₙ − ε₀))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingKernel {
    poles: Vec<f64>,
    residues: Vec<[[C64; 3]; 3]>,
    guard: f64,
}

impl CouplingKernel {
    /// Kernel over the lowest `n_levels` excited levels (all when `None`).
    pub fn new(spec: &Spectrum, voltages: &[OperatorRep; 3], n_levels: Option<usize>) -> Result<Self> {
        let available = spec.len().saturating_sub(1);
        let count = n_levels.unwrap_or(available);
        if count == 0 || count > available {
            return Err(Error::invalid(
                "n_levels",
                format!("{count} excited levels requested, {available} available"),
            ));
        }
        let cols: Vec<Vec<C64>> = voltages.iter().map(|b| spec.column_elements(b, 0)).collect();
        let levels = 1..=count;
        let poles = levels.clone().map(|n| spec.excitation(n)).collect();
        let residues = levels
            .map(|n| std::array::from_fn(|j| std::array::from_fn(|k| cols[j][n].conj() * cols[k][n])))
            .collect();
        Ok(Self {
            poles,
            residues,
            guard: POLE_GUARD_GHZ,
        })
    }

    /// Builds, diagonalizes and wraps the circuit described by `params`.
    pub fn from_params(params: &CircuitParams) -> Result<Self> {
        let spec = diagonalize_all(params)?;
        Self::new(&spec, &voltage_ops(params)?, None)
    }

    /// Kernel from explicit transition frequencies and residue matrices.
    pub fn from_parts(poles: Vec<f64>, residues: Vec<[[C64; 3]; 3]>) -> Result<Self> {
        if poles.len() != residues.len() || poles.is_empty() {
            return Err(Error::invalid("residues", "need one residue matrix per pole"));
        }
        Ok(Self {
            poles,
            residues,
            guard: POLE_GUARD_GHZ,
        })
    }

    pub fn with_guard(mut self, guard: f64) -> Self {
        self.guard = guard;
        self
    }

    /// Keeps only the lowest `n` transitions.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.poles.len());
        Self {
            poles: self.poles[..n].to_vec(),
            residues: self.residues[..n].to_vec(),
            guard: self.guard,
        }
    }

    /// Transition frequencies `εₙ − ε₀` in GHz.
    pub fn poles(&self) -> &[f64] {
        &self.poles
    }

    pub fn residues(&self) -> &[[[C64; 3]; 3]] {
        &self.residues
    }

    pub fn guard(&self) -> f64 {
        self.guard
    }

    /// Errors if `omega` lies within the guard distance of a pole.
    pub fn check_guard(&self, omega: f64) -> Result<()> {
        for (level, &pole) in self.poles.iter().enumerate() {
            if (omega - pole).abs() < self.guard {
                return Err(Error::PoleProximity {
                    omega,
                    level: level + 1,
                    pole,
                    guard: self.guard,
                });
            }
        }
        Ok(())
    }

    /// `T(ω)` at a real frequency, guarded against poles.
    pub fn eval(&self, omega: f64) -> Result<Matrix3<C64>> {
        self.check_guard(omega)?;
        Ok(self.eval_complex(C64::new(omega, 0.0)))
    }

    /// `T(z)` anywhere off the poles.
    pub fn eval_complex(&self, z: C64) -> Matrix3<C64> {
        let mut acc = [[C64::new(0.0, 0.0); 3]; 3];
        for (&pole, r) in self.poles.iter().zip(&self.residues) {
            let w = (C64::i() * (z - pole)).inv();
            for j in 0..3 {
                for k in 0..3 {
                    acc[j][k] += r[j][k] * w;
                }
            }
        }
        Matrix3::from_fn(|j, k| acc[j][k])
    }

    /// `α(z) = i·T₂₁(z)`.
    pub fn alpha(&self, z: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (&pole, r) in self.poles.iter().zip(&self.residues) {
            acc += r[1][0] / (z - pole);
        }
        acc
    }

    /// `β(ω) = i·T₁₁(ω)`, real on the real axis.
    pub fn beta(&self, omega: f64) -> f64 {
        self.poles
            .iter()
            .zip(&self.residues)
            .map(|(&pole, r)| r[0][0].re / (omega - pole))
            .sum()
    }
}

/// Sampled coupling matrix on a real frequency grid.
#[derive(Clone, Debug)]
pub struct CouplingResponse {
    pub kernel: CouplingKernel,
    pub omega: Vec<f64>,
    pub t: Vec<Matrix3<C64>>,
    pub alpha: Vec<C64>,
    pub beta: Vec<f64>,
}

impl CouplingResponse {
    pub fn sample(kernel: &CouplingKernel, omega: &[f64]) -> Result<Self> {
        let t = omega.iter().map(|&w| kernel.eval(w)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kernel: kernel.clone(),
            omega: omega.to_vec(),
            alpha: t.iter().map(|m| C64::i() * m[(1, 0)]).collect(),
            beta: t.iter().map(|m| (C64::i() * m[(0, 0)]).re).collect(),
            t,
        })
    }

    /// `max |T_kj + conj(T_jk)|` over the grid.
    pub fn anti_hermiticity_error(&self) -> f64 {
        self.t
            .iter()
            .map(|m| (m + m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }
}

/// `T(ω)` on `omega` using the lowest `n_levels` excited levels.
pub fn t_matrix(
    spec: &Spectrum,
    voltages: &[OperatorRep; 3],
    omega: &[f64],
    n_levels: Option<usize>,
) -> Result<CouplingResponse> {
    CouplingResponse::sample(&CouplingKernel::new(spec, voltages, n_levels)?, omega)
}
