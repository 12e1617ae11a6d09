//! Loop currents, their eigenbasis matrix elements, vortex circulation and
//! time-domain traces.
//!
//! Currents are dimensionless (critical current set to one). Time evolution
//! uses `e^{-iεt}` with `ε` in GHz, so `t` is in units of `1/GHz` and a
//! transition at `ω` has period `2π/ω`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::charge_basis::{ring, unit, CircuitParams, OperatorRep};
use crate::spectral::Spectrum;
use crate::{Error, Result, C64};

/// Minimum gap (GHz) for a level pair to have well-defined phases.
pub const DEGENERACY_GAP_GHZ: f64 = 1e-6;
/// Matrix elements smaller than this are treated as zero.
pub const AMPLITUDE_FLOOR: f64 = 1e-8;
/// Default tolerance (rad) on phase-step quantization.
pub const PHASE_TOLERANCE: f64 = 1e-6;

/// Persistent-current operators of the three small loops.
#[derive(Clone, Debug)]
pub struct LoopCurrentSet {
    pub currents: [OperatorRep; 3],
    pub params: CircuitParams,
}

impl LoopCurrentSet {
    /// `Σᵢ Îᵢ`.
    pub fn total(&self) -> OperatorRep {
        &(&self.currents[0] + &self.currents[1]) + &self.currents[2]
    }

    /// `Σᵢ sin(φ̂ᵢ₊₁ − φ̂ᵢ + 2πAᵢ)`, the ring-junction part of the total.
    pub fn ring_sine_sum(&self) -> OperatorRep {
        let basis = self.params.basis();
        let terms: Vec<OperatorRep> = (0..3)
            .map(|i| OperatorRep::sin_of(basis, ring(i), 2.0 * PI * self.params.a_loops[i]))
            .collect();
        &(&terms[0] + &terms[1]) + &terms[2]
    }
}

/// `Îᵢ = sin(φ̂ᵢ₊₁ − φ̂ᵢ + 2πAᵢ) + sin φ̂ᵢ − sin φ̂ᵢ₊₁`.
pub fn loop_currents(params: &CircuitParams) -> Result<LoopCurrentSet> {
    params.validate()?;
    let basis = params.basis();
    let currents = std::array::from_fn(|i| {
        let j = (i + 1) % 3;
        let ring_term = OperatorRep::sin_of(basis, ring(i), 2.0 * PI * params.a_loops[i]);
        let own = OperatorRep::sin_of(basis, unit(i, 1), 0.0);
        let next = OperatorRep::sin_of(basis, unit(j, 1), 0.0).scaled(C64::new(-1.0, 0.0));
        &(&ring_term + &own) + &next
    });
    Ok(LoopCurrentSet {
        currents,
        params: params.clone(),
    })
}

/// `Iᵢ^{mn} = ⟨εₘ|Îᵢ|εₙ⟩` for one level pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairElements {
    pub m: usize,
    pub n: usize,
    pub values: [C64; 3],
}

impl PairElements {
    pub fn magnitudes(&self) -> [f64; 3] {
        self.values.map(|v| v.norm())
    }

    /// Arguments `φᵢ^{mn}`.
    pub fn phases(&self) -> [f64; 3] {
        self.values.map(|v| v.arg())
    }

    /// `φᵢ^{mn} − φ₁^{mn}` wrapped to `(−π, π]`.
    pub fn relative_phases(&self) -> [f64; 3] {
        let p = self.phases();
        p.map(|x| wrap(x - p[0]))
    }

    fn conjugate(&self) -> Self {
        Self {
            m: self.n,
            n: self.m,
            values: self.values.map(|v| v.conj()),
        }
    }
}

/// Matrix elements for a set of level pairs, including the diagonal entries
/// of every level involved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurrentMatrixElements {
    pub entries: Vec<PairElements>,
}

impl CurrentMatrixElements {
    /// Elements for `(m, n)`, conjugating a stored `(n, m)` entry if needed.
    pub fn get(&self, m: usize, n: usize) -> Option<PairElements> {
        self.entries.iter().find_map(|e| {
            if (e.m, e.n) == (m, n) {
                Some(e.clone())
            } else if (e.n, e.m) == (m, n) {
                Some(e.conjugate())
            } else {
                None
            }
        })
    }
}

pub fn matrix_elements(
    spec: &Spectrum,
    lc: &LoopCurrentSet,
    pairs: &[(usize, usize)],
) -> Result<CurrentMatrixElements> {
    let mut wanted: Vec<(usize, usize)> = Vec::new();
    for &(m, n) in pairs {
        if m >= spec.len() || n >= spec.len() {
            return Err(Error::invalid(
                "pairs",
                format!("level pair ({m}, {n}) exceeds {} levels", spec.len()),
            ));
        }
        spec.require_gap(m, n, DEGENERACY_GAP_GHZ)?;
        for p in [(m, m), (n, n), (m, n)] {
            if !wanted.contains(&p) {
                wanted.push(p);
            }
        }
    }
    let states: Vec<Vec<C64>> = (0..spec.len()).map(|k| spec.state(k)).collect();
    let entries = wanted
        .into_iter()
        .map(|(m, n)| PairElements {
            m,
            n,
            values: std::array::from_fn(|i| lc.currents[i].matrix_element(&states[m], &states[n])),
        })
        .collect();
    Ok(CurrentMatrixElements { entries })
}

/// Circulation of a level pair from its loop-to-loop phase steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Directionality {
    /// `+1`, `0` or `−1`.
    pub theta: i8,
    /// `φᵢ^{mn} − φᵢ₊₁^{mn}` wrapped to `(−π, π]`.
    pub steps: [f64; 3],
}

pub fn directionality(me: &PairElements, tol: f64) -> Result<Directionality> {
    directionality_with_floor(me, tol, AMPLITUDE_FLOOR)
}

pub fn directionality_with_floor(me: &PairElements, tol: f64, floor: f64) -> Result<Directionality> {
    let phases = me.phases();
    let steps: [f64; 3] = std::array::from_fn(|i| wrap(phases[i] - phases[(i + 1) % 3]));
    if me.magnitudes().iter().any(|&a| a <= floor) {
        return Ok(Directionality { theta: 0, steps });
    }
    let mut classes = [0i8; 3];
    let mut residual = 0.0f64;
    for (class, &s) in classes.iter_mut().zip(&steps) {
        let (c, r) = [(0i8, 0.0), (1, 2.0 * PI / 3.0), (-1, -2.0 * PI / 3.0)]
            .iter()
            .map(|&(c, target)| (c, wrap(s - target).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("three candidates");
        *class = c;
        residual = residual.max(r);
    }
    if residual > tol {
        return Err(Error::NotQuantized { steps, residual });
    }
    if classes.iter().any(|&c| c != classes[0]) {
        return Err(Error::InconsistentCirculation { steps });
    }
    Ok(Directionality {
        theta: classes[0],
        steps,
    })
}

/// `⟨Îᵢ(t)⟩` for the superposition `c_m|εₘ⟩ + c_n|εₙ⟩`, with
/// `ω_mn = εₘ − εₙ`. Returns one trace per loop.
pub fn superposition_current(
    me: &CurrentMatrixElements,
    (m, n): (usize, usize),
    c_m: C64,
    c_n: C64,
    omega_mn: f64,
    t_grid: &[f64],
) -> Result<[Vec<f64>; 3]> {
    let norm = c_m.norm_sqr() + c_n.norm_sqr();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "c_m, c_n",
            format!("weights must be normalized, |c_m|²+|c_n|² = {norm}"),
        ));
    }
    let missing = || Error::invalid("me", format!("no matrix elements for pair ({m}, {n})"));
    let mm = me.get(m, m).ok_or_else(missing)?;
    let nn = me.get(n, n).ok_or_else(missing)?;
    let mn = me.get(m, n).ok_or_else(missing)?;
    let weight = c_m.conj() * c_n;
    Ok(std::array::from_fn(|i| {
        let constant = c_m.norm_sqr() * mm.values[i].re + c_n.norm_sqr() * nn.values[i].re;
        t_grid
            .iter()
            .map(|&t| constant + 2.0 * (weight * C64::from_polar(1.0, omega_mn * t) * mn.values[i]).re)
            .collect()
    }))
}

/// Time-domain response terms for a drive on one island.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseTraces {
    pub drive_island: usize,
    pub levels: Vec<usize>,
    /// `traces[l][i][t]` is `pⁿᵢⱼ(t)` for `n = levels[l]` and loop `i`.
    pub traces: Vec<[Vec<f64>; 3]>,
}

/// `pⁿᵢⱼ(t) = −i⟨G|Îᵢ|εₙ⟩⟨εₙ|B̂ⱼ|G⟩e^{−iεₙt} + c.c.`, energies from the ground state.
pub fn linear_response_terms(
    spec: &Spectrum,
    lc: &LoopCurrentSet,
    voltages: &[OperatorRep; 3],
    drive_island: usize,
    t_grid: &[f64],
    levels: &[usize],
) -> Result<ResponseTraces> {
    if drive_island >= 3 {
        return Err(Error::invalid(
            "drive_island",
            format!("index {drive_island} out of range 0..3"),
        ));
    }
    if let Some(&bad) = levels.iter().find(|&&n| n == 0 || n >= spec.len()) {
        return Err(Error::invalid(
            "levels",
            format!("level {bad} must be an excited level below {}", spec.len()),
        ));
    }
    let b_col = spec.column_elements(&voltages[drive_island], 0);
    let i_cols: Vec<Vec<C64>> = lc.currents.iter().map(|op| spec.column_elements(op, 0)).collect();
    let traces = levels
        .iter()
        .map(|&n| {
            let eps = spec.excitation(n);
            std::array::from_fn(|i| {
                let z = i_cols[i][n].conj() * b_col[n];
                t_grid
                    .iter()
                    .map(|&t| 2.0 * (z * C64::from_polar(1.0, -eps * t)).im)
                    .collect()
            })
        })
        .collect();
    Ok(ResponseTraces {
        drive_island,
        levels: levels.to_vec(),
        traces,
    })
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge_basis::voltage_ops;
    use crate::spectral::{diagonalize, diagonalize_all};

    fn small() -> CircuitParams {
        CircuitParams::default().with_n_max(2)
    }

    fn synthetic(steps: [f64; 3]) -> PairElements {
        let mut phase = 0.3;
        let mut values = [C64::new(0.0, 0.0); 3];
        for (i, v) in values.iter_mut().enumerate() {
            *v = C64::from_polar(0.2, phase);
            phase -= steps[i];
        }
        PairElements { m: 0, n: 1, values }
    }

    #[test]
    fn telescoping_leaves_ring_sines() {
        let p = CircuitParams {
            a_loops: [0.2, 0.27, 0.31],
            ..small()
        };
        let lc = loop_currents(&p).unwrap();
        let total = lc.total();
        let ring = lc.ring_sine_sum();
        let dim = p.basis().dim();
        for r in 0..dim {
            for c in 0..dim {
                assert!((total.get(r, c) - ring.get(r, c)).norm() < 1e-12);
            }
        }
        for op in &lc.currents {
            assert!(op.hermiticity_error() < 1e-12);
        }
    }

    #[test]
    fn no_ground_current_without_flux() {
        let p = small().with_flux(0.0);
        let spec = diagonalize(&p, 1).unwrap();
        let lc = loop_currents(&p).unwrap();
        for op in &lc.currents {
            assert!(spec.expectation(op, 0).norm() < 1e-12);
        }
    }

    #[test]
    fn default_currents_are_loop_symmetric() {
        let p = CircuitParams::default();
        let spec = diagonalize(&p, 3).unwrap();
        let lc = loop_currents(&p).unwrap();
        let me = matrix_elements(&spec, &lc, &[(0, 1), (0, 2)]).unwrap();
        for k in 0..3 {
            let d = me.get(k, k).unwrap().values;
            assert!((d[0] - d[1]).norm() < 1e-9 && (d[1] - d[2]).norm() < 1e-9);
        }
        for (m, n) in [(0, 1), (0, 2)] {
            let e = me.get(m, n).unwrap();
            let mag = e.magnitudes();
            assert!((mag[0] - mag[1]).abs() < 1e-9 && (mag[1] - mag[2]).abs() < 1e-9);
            let back = me.get(n, m).unwrap();
            for i in 0..3 {
                assert_eq!(back.values[i], e.values[i].conj());
            }
            // stored value agrees with direct evaluation
            let direct = spec.matrix_element(&lc.currents[1], n, m);
            assert!((direct - back.values[1]).norm() < 1e-12);
        }
    }

    #[test]
    fn default_vortices_counter_rotate() {
        let p = CircuitParams::default();
        let spec = diagonalize(&p, 3).unwrap();
        let lc = loop_currents(&p).unwrap();
        let me = matrix_elements(&spec, &lc, &[(0, 1), (0, 2)]).unwrap();
        let t01 = directionality(&me.get(0, 1).unwrap(), PHASE_TOLERANCE).unwrap();
        let t02 = directionality(&me.get(0, 2).unwrap(), PHASE_TOLERANCE).unwrap();
        assert!(t01.theta != 0 && t02.theta != 0);
        assert_eq!(t01.theta, -t02.theta);
    }

    #[test]
    fn circulation_flips_under_flux_reflection() {
        for a in [0.1, 0.3] {
            let classify = |a: f64| {
                let p = small().with_flux(a);
                let spec = diagonalize(&p, 3).unwrap();
                let lc = loop_currents(&p).unwrap();
                let me = matrix_elements(&spec, &lc, &[(0, 1)]).unwrap();
                directionality(&me.get(0, 1).unwrap(), PHASE_TOLERANCE).unwrap().theta
            };
            assert_eq!(classify(a), -classify(1.0 - a));
        }
    }

    #[test]
    fn no_circulation_without_flux() {
        let p = small().with_flux(0.0);
        let spec = diagonalize(&p, 2).unwrap();
        let lc = loop_currents(&p).unwrap();
        let me = matrix_elements(&spec, &lc, &[(0, 1)]).unwrap();
        assert_eq!(
            directionality(&me.get(0, 1).unwrap(), PHASE_TOLERANCE).unwrap().theta,
            0
        );
    }

    #[test]
    fn classifies_synthetic_steps() {
        let third = 2.0 * PI / 3.0;
        assert_eq!(directionality(&synthetic([third; 3]), 1e-6).unwrap().theta, 1);
        assert_eq!(directionality(&synthetic([-third; 3]), 1e-6).unwrap().theta, -1);
        assert_eq!(directionality(&synthetic([0.0; 3]), 1e-6).unwrap().theta, 0);
        assert!(matches!(
            directionality(&synthetic([third + 1e-3, third, third - 1e-3]), 1e-6),
            Err(Error::NotQuantized { .. })
        ));
        assert!(matches!(
            directionality(&synthetic([0.0, third, -third]), 1e-6),
            Err(Error::InconsistentCirculation { .. })
        ));
        let mut tiny = synthetic([third; 3]);
        tiny.values[2] = C64::new(1e-12, 0.0);
        assert_eq!(directionality(&tiny, 1e-6).unwrap().theta, 0);
    }

    #[test]
    fn degenerate_pairs_are_rejected() {
        let p = CircuitParams {
            ej_ghz: 1e-300,
            ng: [0.0; 3],
            ..small()
        };
        let spec = diagonalize(&p, 3).unwrap();
        let lc = loop_currents(&p).unwrap();
        assert!(matches!(
            matrix_elements(&spec, &lc, &[(1, 2)]),
            Err(Error::Degenerate { .. })
        ));
    }

    fn table(values_mn: [C64; 3], diag: f64) -> CurrentMatrixElements {
        let d = [C64::new(diag, 0.0); 3];
        CurrentMatrixElements {
            entries: vec![
                PairElements { m: 1, n: 1, values: d },
                PairElements { m: 0, n: 0, values: d },
                PairElements {
                    m: 1,
                    n: 0,
                    values: values_mn,
                },
            ],
        }
    }

    #[test]
    fn pure_state_trace_is_constant() {
        let me = table([C64::new(0.1, 0.2); 3], 0.05);
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let traces = superposition_current(&me, (1, 0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), 2.0, &t).unwrap();
        for tr in &traces {
            assert!(tr.iter().all(|&x| (x - 0.05).abs() < 1e-15));
        }
    }

    #[test]
    fn circulating_traces_are_shifted_by_a_third_period() {
        let third = 2.0 * PI / 3.0;
        let me = table(synthetic([third; 3]).values, 0.0);
        let omega = 2.0;
        let period = 2.0 * PI / omega;
        let t: Vec<f64> = (0..200).map(|k| k as f64 * period / 60.0).collect();
        let c = C64::new(0.5f64.sqrt(), 0.0);
        let traces = superposition_current(&me, (1, 0), c, c, omega, &t).unwrap();
        let shifted = superposition_current(
            &me,
            (1, 0),
            c,
            c,
            omega,
            &t.iter().map(|x| x + period / 3.0).collect::<Vec<_>>(),
        )
        .unwrap();
        // loop i+1 lags loop i by a third of a period
        for k in 0..t.len() {
            assert!((shifted[1][k] - traces[0][k]).abs() < 1e-12);
        }
        let bound = 2.0 * 0.5 * 0.2;
        assert!(traces.iter().flatten().all(|x| x.abs() <= bound + 1e-12));
        assert!(superposition_current(&me, (1, 0), c, C64::new(1.0, 0.0), omega, &t).is_err());
    }

    #[test]
    fn response_terms_sum_to_commutator() {
        let p = small();
        let spec = diagonalize_all(&p).unwrap();
        let lc = loop_currents(&p).unwrap();
        let b = voltage_ops(&p).unwrap();
        let levels: Vec<usize> = (1..spec.len()).collect();
        let resp = linear_response_terms(&spec, &lc, &b, 0, &[0.0, 0.4], &levels).unwrap();
        let g = spec.state(0);
        for i in 0..3 {
            let comm = &(&lc.currents[i] * &b[0]) + &(&b[0] * &lc.currents[i]).scaled(C64::new(-1.0, 0.0));
            let expected = (C64::new(0.0, -1.0) * comm.expectation(&g)).re;
            let sum: f64 = resp.traces.iter().map(|tr| tr[i][0]).sum();
            assert!((sum - expected).abs() < 1e-10, "{sum} vs {expected}");
        }
        assert!(linear_response_terms(&spec, &lc, &b, 0, &[0.0], &[0]).is_err());
    }
}
