//! Truncated Cooper-pair charge basis and the operators of the central circuit.
//!
//! Basis states are charge triples `|n₁, n₂, n₃⟩` with `|nᵢ| ≤ n_max`. Every
//! phase-dependent operator is assembled from a single primitive, the charge
//! displacement `e^{i(δ·φ̂ + θ)}`, which moves `|n⟩` to `|n + δ⟩` and drops
//! amplitudes that would leave the truncated box. In particular `e^{+iφ̂ᵢ}`
//! raises `nᵢ` by one, consistent with `[φ̂ⱼ, N̂ₖ] = iδⱼₖ`, and `cos`/`sin`
//! operators are always `(e^{ix} ± e^{-ix}) / (2, 2i)`.
//!
//! Flux orientation: the ring junction between island `i` and `i+1` carries the
//! Peierls phase as `cos(φ̂ᵢ₊₁ − φ̂ᵢ + 2πAᵢ)`. With this orientation a positive
//! frustration circulates signals along the port order 1 → 2 → 3.

use std::f64::consts::PI;
use std::ops::{Add, Mul};

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Physical inputs of the three-island circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircuitParams {
    /// Josephson energy `E_J/h` in GHz.
    pub ej_ghz: f64,
    /// Single-junction charging energy `E_C/h = e²/(2C_J)/h` in GHz.
    pub ec_ghz: f64,
    /// Coupler capacitance in units of the junction capacitance.
    pub cc_over_cj: f64,
    /// Residual ground capacitance in units of the junction capacitance.
    pub cg_over_cj: f64,
    /// Offset charge of each island, in Cooper pairs.
    pub ng: [f64; 3],
    /// Frustration (flux quanta) threading each of the three loops.
    pub a_loops: [f64; 3],
    /// Charge truncation: the basis keeps `|nᵢ| ≤ n_max`.
    pub n_max: usize,
}

impl Default for CircuitParams {
    fn default() -> Self {
        Self {
            ej_ghz: 30.0,
            ec_ghz: 30.0,
            cc_over_cj: 7.0,
            cg_over_cj: 7.0,
            ng: [0.444; 3],
            a_loops: [0.2484; 3],
            n_max: 4,
        }
    }
}

impl CircuitParams {
    /// Same circuit with the frustration `a` on every loop.
    pub fn with_flux(mut self, a: f64) -> Self {
        self.a_loops = [a; 3];
        self
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    pub fn basis(&self) -> ChargeBasis {
        ChargeBasis::new(self.n_max)
    }

    /// True when offsets and frustrations are identical on all islands/loops.
    pub fn is_symmetric(&self) -> bool {
        self.ng.iter().all(|&x| x == self.ng[0]) && self.a_loops.iter().all(|&x| x == self.a_loops[0])
    }

    pub fn validate(&self) -> Result<()> {
        positive("ej_ghz", self.ej_ghz)?;
        positive("ec_ghz", self.ec_ghz)?;
        positive("cc_over_cj", self.cc_over_cj)?;
        positive("cg_over_cj", self.cg_over_cj)?;
        if self.n_max == 0 {
            return Err(Error::invalid("n_max", "must be at least 1"));
        }
        if self.ng.iter().chain(&self.a_loops).any(|x| !x.is_finite()) {
            return Err(Error::invalid("ng/a_loops", "must be finite"));
        }
        Ok(())
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            format!("must be positive and finite, got {value}"),
        ))
    }
}

/// Index map between basis positions and charge triples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChargeBasis {
    n_max: usize,
}

impl ChargeBasis {
    pub fn new(n_max: usize) -> Self {
        Self { n_max }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Number of charge values per island, `2·n_max + 1`.
    pub fn side(&self) -> usize {
        2 * self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        self.side().pow(3)
    }

    pub fn index(&self, charges: [i32; 3]) -> Option<usize> {
        let n = self.n_max as i32;
        let side = self.side();
        let mut idx = 0;
        for &c in &charges {
            if c.abs() > n {
                return None;
            }
            idx = idx * side + (c + n) as usize;
        }
        Some(idx)
    }

    pub fn charges(&self, index: usize) -> [i32; 3] {
        let side = self.side();
        let n = self.n_max as i32;
        let offset = |v: usize| (v % side) as i32 - n;
        [offset(index / (side * side)), offset(index / side), offset(index)]
    }

    /// Index of `|n + delta⟩`, or `None` when it leaves the truncated box.
    pub fn displaced(&self, index: usize, delta: [i32; 3]) -> Option<usize> {
        let c = self.charges(index);
        self.index([c[0] + delta[0], c[1] + delta[1], c[2] + delta[2]])
    }

    pub fn states(&self) -> impl Iterator<Item = [i32; 3]> + '_ {
        (0..self.dim()).map(move |i| self.charges(i))
    }
}

/// Dense operator over a charge basis.
#[derive(Clone, Debug)]
pub struct OperatorRep {
    matrix: Mat<C64>,
    basis: ChargeBasis,
    hermitian: bool,
}

impl OperatorRep {
    pub fn zeros(basis: ChargeBasis, hermitian: bool) -> Self {
        let dim = basis.dim();
        Self {
            matrix: Mat::zeros(dim, dim),
            basis,
            hermitian,
        }
    }

    /// Diagonal operator `Σ f(n)|n⟩⟨n|`.
    pub fn diagonal(basis: ChargeBasis, f: impl Fn([i32; 3]) -> f64) -> Self {
        let mut op = Self::zeros(basis, true);
        for i in 0..basis.dim() {
            op.matrix[(i, i)] = C64::new(f(basis.charges(i)), 0.0);
        }
        op
    }

    /// `e^{i(δ·φ̂ + θ)}` with open (dropping) truncation boundaries.
    pub fn phase_exponential(basis: ChargeBasis, delta: [i32; 3], theta: f64) -> Self {
        let mut op = Self::zeros(basis, delta == [0; 3] && theta.sin() == 0.0);
        op.add_exponential(delta, C64::from_polar(1.0, theta));
        op
    }

    /// `cos(δ·φ̂ + θ)`.
    pub fn cos_of(basis: ChargeBasis, delta: [i32; 3], theta: f64) -> Self {
        let mut op = Self::zeros(basis, true);
        op.add_cos(delta, theta, 1.0);
        op
    }

    /// `sin(δ·φ̂ + θ)`.
    pub fn sin_of(basis: ChargeBasis, delta: [i32; 3], theta: f64) -> Self {
        let mut op = Self::zeros(basis, true);
        op.add_sin(delta, theta, 1.0);
        op
    }

    /// Adds `coeff · e^{iδ·φ̂}`.
    fn add_exponential(&mut self, delta: [i32; 3], coeff: C64) {
        for col in 0..self.basis.dim() {
            if let Some(row) = self.basis.displaced(col, delta) {
                self.matrix[(row, col)] += coeff;
            }
        }
    }

    fn add_cos(&mut self, delta: [i32; 3], theta: f64, weight: f64) {
        let half = C64::from_polar(0.5 * weight, theta);
        self.add_exponential(delta, half);
        self.add_exponential(neg(delta), half.conj());
    }

    fn add_sin(&mut self, delta: [i32; 3], theta: f64, weight: f64) {
        // (e^{ix} − e^{−ix}) / 2i
        let c = C64::from_polar(0.5 * weight, theta) / C64::i();
        self.add_exponential(delta, c);
        self.add_exponential(neg(delta), c.conj());
    }

    pub fn basis(&self) -> ChargeBasis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn matrix(&self) -> MatRef<'_, C64> {
        self.matrix.as_ref()
    }

    pub fn into_matrix(self) -> Mat<C64> {
        self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    /// Largest element of `|M − M†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..=j {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Largest element magnitude.
    pub fn max_abs(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .map(|(i, j)| self.matrix[(i, j)].norm())
            .fold(0.0, f64::max)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint().to_owned(),
            basis: self.basis,
            hermitian: self.hermitian,
        }
    }

    /// Dense operator product `self · rhs`.
    pub fn product(&self, rhs: &Self) -> Self {
        assert_eq!(self.basis, rhs.basis, "operators live on different bases");
        Self {
            matrix: &self.matrix * &rhs.matrix,
            basis: self.basis,
            hermitian: false,
        }
    }

    pub fn scaled(&self, factor: C64) -> Self {
        let mut matrix = self.matrix.clone();
        let n = self.dim();
        for j in 0..n {
            for i in 0..n {
                matrix[(i, j)] *= factor;
            }
        }
        Self {
            matrix,
            basis: self.basis,
            hermitian: self.hermitian && factor.im == 0.0,
        }
    }

    /// `⟨bra|M|ket⟩`.
    pub fn matrix_element(&self, bra: &[C64], ket: &[C64]) -> C64 {
        let applied = self.apply(ket);
        bra.iter().zip(&applied).map(|(b, k)| b.conj() * k).sum()
    }

    pub fn expectation(&self, state: &[C64]) -> C64 {
        self.matrix_element(state, state)
    }

    /// `M|v⟩`.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.dim();
        assert_eq!(v.len(), n);
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (j, &vj) in v.iter().enumerate() {
            if vj == C64::new(0.0, 0.0) {
                continue;
            }
            let col = self.matrix.col(j);
            for (o, &m) in out.iter_mut().zip(col.iter()) {
                *o += m * vj;
            }
        }
        out
    }
}

impl Add for &OperatorRep {
    type Output = OperatorRep;

    fn add(self, rhs: &OperatorRep) -> OperatorRep {
        assert_eq!(self.basis, rhs.basis, "operators live on different bases");
        OperatorRep {
            matrix: &self.matrix + &rhs.matrix,
            basis: self.basis,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

impl Mul for &OperatorRep {
    type Output = OperatorRep;

    fn mul(self, rhs: &OperatorRep) -> OperatorRep {
        self.product(rhs)
    }
}

fn neg(delta: [i32; 3]) -> [i32; 3] {
    [-delta[0], -delta[1], -delta[2]]
}

/// Unit displacement on `island` (0-based).
pub(crate) fn unit(island: usize, sign: i32) -> [i32; 3] {
    let mut d = [0; 3];
    d[island] = sign;
    d
}

/// Displacement for the ring junction phase `φ̂ᵢ₊₁ − φ̂ᵢ`.
pub(crate) fn ring(i: usize) -> [i32; 3] {
    let mut d = [0; 3];
    d[(i + 1) % 3] += 1;
    d[i] -= 1;
    d
}

/// Capacitance-derived constants of the circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacitanceAlgebra {
    /// `δ = C_J / (C_C + C_G + C_J)`.
    pub delta: f64,
    /// Dimensionless inverse capacitance matrix `K⁻¹ = I + δ·J`.
    pub kinv: [[f64; 3]; 3],
    /// Largest capacitance eigenvalue `C_M = C_C + C_G + 4C_J`, in units of `C_J`.
    pub cm_over_cj: f64,
    /// Circuit charging energy `E_Σ/h = E_C·C_J/C_M` in GHz.
    pub e_sigma_ghz: f64,
}

impl CapacitanceAlgebra {
    /// The capacitance matrix `C/C_M` that `kinv` inverts.
    pub fn scaled_capacitance(&self) -> [[f64; 3]; 3] {
        let cs = self.cm_over_cj - 1.0;
        let mut c = [[-1.0 / self.cm_over_cj; 3]; 3];
        for (i, row) in c.iter_mut().enumerate() {
            row[i] = cs / self.cm_over_cj;
        }
        c
    }

    /// `B = K⁻¹ n` for a charge (or charge-offset) vector.
    pub fn voltages(&self, n: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|k| (0..3).map(|l| self.kinv[k][l] * n[l]).sum())
    }

    /// Charging energy `4E_Σ (n−n_g)ᵀK⁻¹(n−n_g)` in GHz.
    pub fn charging_energy(&self, n: [i32; 3], ng: [f64; 3]) -> f64 {
        let v: [f64; 3] = std::array::from_fn(|i| n[i] as f64 - ng[i]);
        let b = self.voltages(v);
        4.0 * self.e_sigma_ghz * (0..3).map(|i| v[i] * b[i]).sum::<f64>()
    }
}

pub fn build_capacitance(params: &CircuitParams) -> Result<CapacitanceAlgebra> {
    positive("cc_over_cj", params.cc_over_cj)?;
    positive("cg_over_cj", params.cg_over_cj)?;
    positive("ec_ghz", params.ec_ghz)?;
    let delta = 1.0 / (params.cc_over_cj + params.cg_over_cj + 1.0);
    let mut kinv = [[delta; 3]; 3];
    for (i, row) in kinv.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let cm_over_cj = params.cc_over_cj + params.cg_over_cj + 4.0;
    Ok(CapacitanceAlgebra {
        delta,
        kinv,
        cm_over_cj,
        e_sigma_ghz: params.ec_ghz / cm_over_cj,
    })
}

/// `e^{±iφ̂ᵢ}` for `island` in `0..3`.
pub fn shift_op(basis: ChargeBasis, island: usize, sign: i32) -> Result<OperatorRep> {
    if island >= 3 {
        return Err(Error::invalid("island", format!("index {island} out of range 0..3")));
    }
    if sign != 1 && sign != -1 {
        return Err(Error::invalid("sign", format!("must be ±1, got {sign}")));
    }
    Ok(OperatorRep::phase_exponential(basis, unit(island, sign), 0.0))
}

/// Island number operators `N̂ᵢ`.
pub fn number_ops(basis: ChargeBasis) -> [OperatorRep; 3] {
    std::array::from_fn(|k| OperatorRep::diagonal(basis, |n| n[k] as f64))
}

/// Dimensionless island voltages `B̂ = K⁻¹N̂`.
pub fn voltage_ops(params: &CircuitParams) -> Result<[OperatorRep; 3]> {
    params.validate()?;
    let cap = build_capacitance(params)?;
    let basis = params.basis();
    Ok(std::array::from_fn(|k| {
        OperatorRep::diagonal(basis, |n| cap.voltages([n[0] as f64, n[1] as f64, n[2] as f64])[k])
    }))
}

/// Central-circuit Hamiltonian in GHz:
/// `4E_Σ(N̂−N_g)ᵀK⁻¹(N̂−N_g) − E_J Σᵢ [cos(φ̂ᵢ₊₁ − φ̂ᵢ + 2πAᵢ) + cos φ̂ᵢ]`.
pub fn build_hamiltonian(params: &CircuitParams) -> Result<OperatorRep> {
    params.validate()?;
    let cap = build_capacitance(params)?;
    let basis = params.basis();
    let mut h = OperatorRep::diagonal(basis, |n| cap.charging_energy(n, params.ng));
    for i in 0..3 {
        h.add_cos(ring(i), 2.0 * PI * params.a_loops[i], -params.ej_ghz);
        h.add_cos(unit(i, 1), 0.0, -params.ej_ghz);
    }
    Ok(h)
}
