//! Dense diagonalization of the central circuit, flux sweeps, level-crossing
//! detection and truncation-convergence checks.

use faer::{Mat, MatRef, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charge_basis::{build_hamiltonian, ChargeBasis, CircuitParams, OperatorRep};
use crate::{Error, Result, C64};

/// Lowest eigenpairs of the circuit Hamiltonian, ascending in energy.
#[derive(Clone, Debug)]
pub struct Spectrum {
    energies: Vec<f64>,
    vectors: Mat<C64>,
    params: CircuitParams,
}

impl Spectrum {
    /// Absolute eigenvalues in GHz.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn params(&self) -> &CircuitParams {
        &self.params
    }

    pub fn basis(&self) -> ChargeBasis {
        self.params.basis()
    }

    pub fn energy(&self, n: usize) -> f64 {
        self.energies[n]
    }

    /// `εₙ − ε₀`.
    pub fn excitation(&self, n: usize) -> f64 {
        self.energies[n] - self.energies[0]
    }

    pub fn excitations(&self) -> Vec<f64> {
        self.energies.iter().map(|e| e - self.energies[0]).collect()
    }

    /// Eigenvectors as columns in the charge basis.
    pub fn vectors(&self) -> MatRef<'_, C64> {
        self.vectors.as_ref()
    }

    pub fn state(&self, n: usize) -> Vec<C64> {
        self.vectors.col(n).iter().copied().collect()
    }

    /// `⟨εₘ|op|εₙ⟩`.
    pub fn matrix_element(&self, op: &OperatorRep, m: usize, n: usize) -> C64 {
        op.matrix_element(&self.state(m), &self.state(n))
    }

    /// `⟨εₘ|op|εₙ⟩` for every retained `m`.
    pub fn column_elements(&self, op: &OperatorRep, n: usize) -> Vec<C64> {
        let applied = op.apply(&self.state(n));
        (0..self.len())
            .map(|m| {
                self.vectors
                    .col(m)
                    .iter()
                    .zip(&applied)
                    .map(|(u, a)| u.conj() * a)
                    .sum()
            })
            .collect()
    }

    pub fn expectation(&self, op: &OperatorRep, n: usize) -> C64 {
        self.matrix_element(op, n, n)
    }

    /// Errors when `εₘ` and `εₙ` are closer than `threshold` GHz.
    pub fn require_gap(&self, m: usize, n: usize, threshold: f64) -> Result<()> {
        let gap = (self.energies[m] - self.energies[n]).abs();
        if m != n && gap <= threshold {
            Err(Error::Degenerate { m, n, gap })
        } else {
            Ok(())
        }
    }

    /// `max |V†V − I|` over the retained columns.
    pub fn orthonormality_error(&self) -> f64 {
        let k = self.len();
        let gram = self.vectors.adjoint() * &self.vectors;
        let mut worst = 0.0f64;
        for j in 0..k {
            for i in 0..k {
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - C64::new(expect, 0.0)).norm());
            }
        }
        worst
    }

    /// `max ‖H v − ε v‖∞` over the retained pairs.
    pub fn residual(&self, h: &OperatorRep) -> f64 {
        (0..self.len())
            .map(|n| {
                let v = self.state(n);
                h.apply(&v)
                    .iter()
                    .zip(&v)
                    .map(|(hv, x)| (hv - x * self.energies[n]).norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Builds and diagonalizes the Hamiltonian, keeping the lowest `k` pairs.
pub fn diagonalize(params: &CircuitParams, k: usize) -> Result<Spectrum> {
    let h = build_hamiltonian(params)?;
    diagonalize_operator(&h, params, k)
}

/// Full spectrum, all `dim` levels.
pub fn diagonalize_all(params: &CircuitParams) -> Result<Spectrum> {
    diagonalize(params, params.basis().dim())
}

/// Diagonalizes an already assembled Hamiltonian for `params`.
pub fn diagonalize_operator(h: &OperatorRep, params: &CircuitParams, k: usize) -> Result<Spectrum> {
    let dim = h.dim();
    if k == 0 || k > dim {
        return Err(Error::invalid("k", format!("level count {k} must lie in 1..={dim}")));
    }
    if !h.is_hermitian() {
        return Err(Error::invalid("hamiltonian", "operator is not flagged Hermitian"));
    }
    let evd = h
        .matrix()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::EigenSolver {
            dim,
            reason: format!("{e:?}"),
        })?;
    let values = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| values[a].re.total_cmp(&values[b].re));
    order.truncate(k);

    let mut energies = Vec::with_capacity(k);
    let mut vectors = Mat::<C64>::zeros(dim, k);
    for (col, &src) in order.iter().enumerate() {
        let e = values[src].re;
        if !e.is_finite() {
            return Err(Error::EigenSolver {
                dim,
                reason: format!("non-finite eigenvalue at position {src}"),
            });
        }
        energies.push(e);
        let v = u.col(src);
        let pivot = largest_component(v.iter().copied());
        let phase = pivot.conj() / pivot.norm();
        for row in 0..dim {
            vectors[(row, col)] = v[row] * phase;
        }
    }
    Ok(Spectrum {
        energies,
        vectors,
        params: params.clone(),
    })
}

fn largest_component(v: impl Iterator<Item = C64>) -> C64 {
    let mut best = C64::new(0.0, 0.0);
    for x in v {
        if x.norm_sqr() > best.norm_sqr() {
            best = x;
        }
    }
    best
}

/// Ascending eigenvalues only.
pub fn eigenvalues(params: &CircuitParams) -> Result<Vec<f64>> {
    let h = build_hamiltonian(params)?;
    let mut values: Vec<f64> = h
        .matrix()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::EigenSolver {
            dim: h.dim(),
            reason: format!("{e:?}"),
        })?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

const V_SCREEN: f64 = 0.9;
const REFINE_TOLERANCE: f64 = 1e-9;
const REFINE_MAX_EVALS: usize = 40;

/// Settings for gap-based crossing detection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingOptions {
    /// Number of lowest levels whose adjacent gaps are monitored.
    pub tracked_levels: usize,
    /// Gap (GHz) below which a minimum counts as a crossing.
    pub threshold_ghz: f64,
}

impl Default for CrossingOptions {
    fn default() -> Self {
        Self {
            tracked_levels: 4,
            threshold_ghz: 1e-3,
        }
    }
}

/// Flux bracket in which two adjacent levels (nearly) meet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    /// Lower level index of the pair `(lower, lower + 1)`.
    pub lower_level: usize,
    /// Grid interval containing the refined minimum.
    pub a_interval: (f64, f64),
    /// Refined flux of the gap minimum.
    pub a_min: f64,
    /// Gap at `a_min` in GHz.
    pub gap_ghz: f64,
}

/// Levels as a function of the (common) loop frustration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxSweep {
    pub a_grid: Vec<f64>,
    /// `levels[p][n]` is the absolute energy of level `n` at `a_grid[p]`, in GHz.
    pub levels: Vec<Vec<f64>>,
    pub crossings: Vec<Crossing>,
}

pub fn sweep_flux(params: &CircuitParams, a_grid: &[f64], k: usize) -> Result<FluxSweep> {
    sweep_flux_with(params, a_grid, k, &CrossingOptions::default())
}

pub fn sweep_flux_with(params: &CircuitParams, a_grid: &[f64], k: usize, opts: &CrossingOptions) -> Result<FluxSweep> {
    params.validate()?;
    if a_grid.is_empty() {
        return Err(Error::invalid("a_grid", "empty flux grid"));
    }
    if a_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::invalid("a_grid", "flux values must lie within [0, 1]"));
    }
    if a_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("a_grid", "flux grid must be strictly increasing"));
    }
    let dim = params.basis().dim();
    if k == 0 || k > dim {
        return Err(Error::invalid("k", format!("level count {k} must lie in 1..={dim}")));
    }
    let levels = a_grid
        .par_iter()
        .map(|&a| {
            eigenvalues(&params.clone().with_flux(a)).map(|mut v| {
                v.truncate(k);
                v
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let crossings = detect_crossings(params, a_grid, &levels, opts)?;
    Ok(FluxSweep {
        a_grid: a_grid.to_vec(),
        levels,
        crossings,
    })
}

fn detect_crossings(
    params: &CircuitParams,
    grid: &[f64],
    levels: &[Vec<f64>],
    opts: &CrossingOptions,
) -> Result<Vec<Crossing>> {
    let tracked = opts.tracked_levels.min(levels[0].len());
    let mut found = Vec::new();
    for lower in 0..tracked.saturating_sub(1) {
        let gap: Vec<f64> = levels.iter().map(|l| l[lower + 1] - l[lower]).collect();
        for p in 0..grid.len() {
            let left = p.checked_sub(1).map(|q| gap[q]);
            let right = gap.get(p + 1).copied();
            let is_min = left.is_none_or(|g| gap[p] <= g) && right.is_none_or(|g| gap[p] < g);
            if !is_min {
                continue;
            }
            // A crossing inside the cell leaves well below the larger
            // neighbouring gap; flatter minima are smooth repulsions.
            let interior = left.is_some() && right.is_some();
            let widest = left.unwrap_or(0.0).max(right.unwrap_or(0.0));
            let candidate = gap[p] < opts.threshold_ghz || (interior && gap[p] <= V_SCREEN * widest);
            if !candidate {
                continue;
            }
            let lo = grid[p.saturating_sub(1)];
            let hi = grid[(p + 1).min(grid.len() - 1)];
            let (a_min, gap_min) = if interior {
                refine_gap_minimum(params, lower, [lo, grid[p], hi], [gap[p - 1], gap[p], gap[p + 1]])?
            } else {
                (grid[p], gap[p])
            };
            if gap_min < opts.threshold_ghz {
                found.push(Crossing {
                    lower_level: lower,
                    a_interval: (lo, hi),
                    a_min,
                    gap_ghz: gap_min,
                });
            }
        }
    }
    found.sort_by(|x, y| x.a_min.total_cmp(&y.a_min));
    Ok(found)
}

/// Locates the gap minimum inside `[a[0], a[2]]` with Brent's method on the
/// squared gap, which is quadratic near an avoided crossing.
fn refine_gap_minimum(params: &CircuitParams, lower: usize, a: [f64; 3], g: [f64; 3]) -> Result<(f64, f64)> {
    let f = |x: f64| -> Result<f64> {
        let e = eigenvalues(&params.clone().with_flux(x))?;
        Ok((e[lower + 1] - e[lower]).powi(2))
    };
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let tol1 = REFINE_TOLERANCE;
    let tol2 = 2.0 * tol1;
    let (mut lo, mut hi) = (a[0], a[2]);
    let (mut x, mut w, mut v) = (a[1], a[1], a[1]);
    let mut fx = g[1] * g[1];
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..REFINE_MAX_EVALS {
        let xm = 0.5 * (lo + hi);
        if (x - xm).abs() <= tol2 - 0.5 * (hi - lo) || fx == 0.0 {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (lo - x) && p < q * (hi - x) {
                d = p / q;
                let u = x + d;
                if u - lo < tol2 || hi - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { lo - x } else { hi - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u)?;
        if fu <= fx {
            if u >= x {
                lo = x;
            } else {
                hi = x;
            }
            (v, fv) = (w, fw);
            (w, fw) = (x, fx);
            (x, fx) = (u, fu);
        } else {
            if u < x {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == x {
                (v, fv) = (w, fw);
                (w, fw) = (u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    Ok((x, fx.sqrt()))
}

/// Level shifts between truncations `n_max` and `n_max + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub n_max: usize,
    pub levels: usize,
    pub tolerance_ghz: f64,
    /// `|εₙ(n_max+1) − εₙ(n_max)|` per level, GHz.
    pub shifts_ghz: Vec<f64>,
    pub max_shift_ghz: f64,
    pub passed: bool,
}

pub fn convergence_check(params: &CircuitParams, k: usize) -> Result<ConvergenceReport> {
    convergence_check_with(params, k, 1e-6)
}

pub fn convergence_check_with(params: &CircuitParams, k: usize, tolerance_ghz: f64) -> Result<ConvergenceReport> {
    let coarse = eigenvalues(params)?;
    let fine = eigenvalues(&params.clone().with_n_max(params.n_max + 1))?;
    if k == 0 || k > coarse.len() {
        return Err(Error::invalid(
            "k",
            format!("level count {k} must lie in 1..={}", coarse.len()),
        ));
    }
    let shifts_ghz: Vec<f64> = coarse.iter().zip(&fine).take(k).map(|(a, b)| (a - b).abs()).collect();
    let max_shift_ghz = shifts_ghz.iter().copied().fold(0.0, f64::max);
    Ok(ConvergenceReport {
        n_max: params.n_max,
        levels: k,
        tolerance_ghz,
        shifts_ghz,
        max_shift_ghz,
        passed: max_shift_ghz < tolerance_ghz,
    })
}
