use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::kernel::CouplingKernel;
use super::phase::{Direction, Target};
use crate::{Error, Result, C64};

/// Largest accepted 1-norm condition number of the inverse susceptibility.
pub const MAX_CONDITION: f64 = 1e12;

/// Resonator and line parameters shared by the three ports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalParams {
    /// Resonator-circuit coupling `g` in GHz.
    pub g_ghz: f64,
    /// Resonator decay rate into its line in GHz.
    pub kappa_ghz: f64,
    /// Bare resonator frequency in GHz.
    pub omega_r_ghz: f64,
    /// Frequency the tuning was made for, in GHz.
    pub omega_t_ghz: f64,
    pub direction: Direction,
}

impl ExternalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("g_ghz", self.g_ghz), ("kappa_ghz", self.kappa_ghz)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !self.omega_r_ghz.is_finite() || !self.omega_t_ghz.is_finite() {
            return Err(Error::invalid("omega_r_ghz", "must be finite"));
        }
        Ok(())
    }
}

/// Matches `κ = 2|α|g²` and `ω_R = ω_T − g²β` at the target frequency.
pub fn tune_external(kernel: &CouplingKernel, target: &Target, g_ghz: f64) -> Result<ExternalParams> {
    tune_at(kernel, target.omega_ghz, g_ghz, target.direction)
}

pub fn tune_at(kernel: &CouplingKernel, omega_t: f64, g_ghz: f64, direction: Direction) -> Result<ExternalParams> {
    if !(g_ghz.is_finite() && g_ghz > 0.0) {
        return Err(Error::invalid(
            "g_ghz",
            format!("must be positive and finite, got {g_ghz}"),
        ));
    }
    kernel.check_guard(omega_t)?;
    let g2 = g_ghz * g_ghz;
    Ok(ExternalParams {
        g_ghz,
        kappa_ghz: 2.0 * kernel.alpha(C64::new(omega_t, 0.0)).norm() * g2,
        omega_r_ghz: omega_t - g2 * kernel.beta(omega_t),
        omega_t_ghz: omega_t,
        direction,
    })
}

/// `S(ω)` on a frequency grid.
#[derive(Clone, Debug)]
pub struct SMatrixSpectrum {
    pub omega: Vec<f64>,
    pub s: Vec<Matrix3<C64>>,
}

impl SMatrixSpectrum {
    /// `|S_{to,from}|²` along the grid (0-based port indices).
    pub fn power(&self, to: usize, from: usize) -> Vec<f64> {
        self.s.iter().map(|m| m[(to, from)].norm_sqr()).collect()
    }

    pub fn power_db(&self, to: usize, from: usize) -> Vec<f64> {
        self.power(to, from).into_iter().map(power_to_db).collect()
    }

    /// `max ‖S†S − I‖_max` over the grid.
    pub fn unitarity_error(&self) -> f64 {
        self.s
            .iter()
            .map(|m| {
                (m.adjoint() * m - Matrix3::identity())
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// `Σ_j |S_ij|²` per grid point for output row `i`.
    pub fn row_sums(&self, i: usize) -> Vec<f64> {
        self.s
            .iter()
            .map(|m| (0..3).map(|j| m[(i, j)].norm_sqr()).sum())
            .collect()
    }
}

/// Power ratio in dB, clamped at −300 dB.
pub fn power_to_db(p: f64) -> f64 {
    if p > 0.0 {
        (10.0 * p.log10()).max(-300.0)
    } else {
        -300.0
    }
}

/// `S(ω) = 1 + κ[(i(ω−ω_R) − κ/2)1 + g²T(ω)]⁻¹` at one frequency.
pub fn s_at(kernel: &CouplingKernel, ext: &ExternalParams, omega: f64) -> Result<Matrix3<C64>> {
    let t = kernel.eval(omega)?;
    let diag = C64::new(-0.5 * ext.kappa_ghz, omega - ext.omega_r_ghz);
    let chi_inv = Matrix3::from_diagonal_element(diag) + t * C64::new(ext.g_ghz * ext.g_ghz, 0.0);
    let chi = chi_inv.try_inverse().ok_or(Error::IllConditioned {
        omega,
        condition: f64::INFINITY,
    })?;
    let condition = norm_one(&chi_inv) * norm_one(&chi);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { omega, condition });
    }
    Ok(Matrix3::identity() + chi * C64::new(ext.kappa_ghz, 0.0))
}

pub fn s_matrix(kernel: &CouplingKernel, ext: &ExternalParams, omega: &[f64]) -> Result<SMatrixSpectrum> {
    ext.validate()?;
    let s = omega
        .iter()
        .map(|&w| s_at(kernel, ext, w))
        .collect::<Result<Vec<_>>>()?;
    Ok(SMatrixSpectrum {
        omega: omega.to_vec(),
        s,
    })
}

fn norm_one(m: &Matrix3<C64>) -> f64 {
    (0..3)
        .map(|j| (0..3).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Contiguous window where `|S_{to,from}|² > 1/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub to: usize,
    pub from: usize,
    pub width_ghz: f64,
    pub lower_ghz: f64,
    pub upper_ghz: f64,
    pub peak_omega_ghz: f64,
    pub peak_power: f64,
    /// The window reached the edge of the grid.
    pub clipped: bool,
}

/// Window around the strongest transmission on the grid.
pub fn bandwidth(sm: &SMatrixSpectrum, to: usize, from: usize) -> Bandwidth {
    let p = sm.power(to, from);
    let seed = p
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    window(sm, &p, to, from, seed)
}

/// Window containing the grid point nearest `center`.
pub fn bandwidth_around(sm: &SMatrixSpectrum, to: usize, from: usize, center: f64) -> Bandwidth {
    let p = sm.power(to, from);
    let seed = sm
        .omega
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - center).abs().total_cmp(&(b.1 - center).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    window(sm, &p, to, from, seed)
}

fn window(sm: &SMatrixSpectrum, p: &[f64], to: usize, from: usize, seed: usize) -> Bandwidth {
    let w = &sm.omega;
    if p.is_empty() || p[seed] <= 0.5 {
        log::warn!("no transmission above one half for S[{to}][{from}]; bandwidth is zero");
        let at = w.get(seed).copied().unwrap_or(f64::NAN);
        return Bandwidth {
            to,
            from,
            width_ghz: 0.0,
            lower_ghz: at,
            upper_ghz: at,
            peak_omega_ghz: at,
            peak_power: p.get(seed).copied().unwrap_or(0.0),
            clipped: false,
        };
    }
    let cross = |i: usize, j: usize| w[i] + (0.5 - p[i]) / (p[j] - p[i]) * (w[j] - w[i]);
    let mut lo = seed;
    while lo > 0 && p[lo - 1] > 0.5 {
        lo -= 1;
    }
    let mut hi = seed;
    while hi + 1 < p.len() && p[hi + 1] > 0.5 {
        hi += 1;
    }
    let lower = if lo > 0 { cross(lo - 1, lo) } else { w[0] };
    let upper = if hi + 1 < p.len() { cross(hi, hi + 1) } else { w[hi] };
    let peak = (lo..=hi).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(seed);
    Bandwidth {
        to,
        from,
        width_ghz: upper - lower,
        lower_ghz: lower,
        upper_ghz: upper,
        peak_omega_ghz: w[peak],
        peak_power: p[peak],
        clipped: lo == 0 || hi + 1 == p.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_kernel() -> CouplingKernel {
        let r = |a: f64, phase: f64| {
            let b = [
                C64::from_polar(a, 0.0),
                C64::from_polar(a, phase),
                C64::from_polar(a, -phase),
            ];
            std::array::from_fn(|j| std::array::from_fn(|k| b[j].conj() * b[k]))
        };
        CouplingKernel::from_parts(vec![1.0, 1.7], vec![r(0.3, 0.4), r(0.2, 2.0)]).unwrap()
    }

    fn ext(g: f64) -> ExternalParams {
        ExternalParams {
            g_ghz: g,
            kappa_ghz: 0.05,
            omega_r_ghz: 1.3,
            omega_t_ghz: 1.3,
            direction: Direction::Clockwise,
        }
    }

    #[test]
    fn decoupled_resonators_only_reflect() {
        let k = toy_kernel();
        let e = ExternalParams {
            g_ghz: 1e-300,
            ..ext(1.0)
        };
        let grid: Vec<f64> = (0..50)
            .map(|i| 1.1 + 0.01 * i as f64)
            .filter(|w| (w - 1.7f64).abs() > 1e-3)
            .collect();
        let sm = s_matrix(&k, &e, &grid).unwrap();
        for (w, s) in grid.iter().zip(&sm.s) {
            let d = C64::new(0.0, w - e.omega_r_ghz);
            let expected = (d + e.kappa_ghz / 2.0) / (d - e.kappa_ghz / 2.0);
            for i in 0..3 {
                assert!((s[(i, i)] - expected).norm() < 1e-12);
                assert!((s[(i, i)].norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn toy_scattering_is_unitary() {
        let k = toy_kernel();
        let grid: Vec<f64> = (0..400).map(|i| 0.2 + 0.0071 * i as f64).collect();
        let sm = s_matrix(&k, &ext(0.3), &grid).unwrap();
        assert!(sm.unitarity_error() < 1e-12);
        for i in 0..3 {
            assert!(sm.row_sums(i).iter().all(|s| (s - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn tuning_rejects_bad_coupling() {
        let k = toy_kernel();
        assert!(tune_at(&k, 1.3, 0.0, Direction::Clockwise).is_err());
        assert!(matches!(
            tune_at(&k, 1.0, 1.0, Direction::Clockwise),
            Err(Error::PoleProximity { .. })
        ));
    }

    #[test]
    fn db_clamps() {
        assert_eq!(power_to_db(0.0), -300.0);
        assert_eq!(power_to_db(1e-40), -300.0);
        assert!((power_to_db(0.5) + 3.0103).abs() < 1e-4);
    }

    #[test]
    fn window_interpolates_half_power_edges() {
        let omega: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        let s = omega
            .iter()
            .map(|w| {
                let amp = (1.0 - ((w - 0.5f64) / 0.2).powi(2)).max(0.0).sqrt();
                let mut m = Matrix3::zeros();
                m[(1, 0)] = C64::new(amp, 0.0);
                m
            })
            .collect();
        let sm = SMatrixSpectrum { omega, s };
        let bw = bandwidth(&sm, 1, 0);
        // |S|² = 1 − ((ω − 0.5)/0.2)² crosses 1/2 at 0.5 ± 0.2/√2
        assert!((bw.width_ghz - 0.4 / 2f64.sqrt()).abs() < 2e-3);
        assert!(!bw.clipped);
        assert_eq!(bandwidth(&sm, 0, 1).width_ghz, 0.0);
        let around = bandwidth_around(&sm, 1, 0, 0.45);
        assert_eq!(around, bw);
    }
}
