//! Phase difference `Δθ = 6·arg α` and the search for nonreciprocal targets.
//!
//! `Δθ` is continued along `ω + i0⁺`: across a pole of `α` the path detours
//! above it on a small semicircle, so the phase picks up the causal increment.
//! A real-axis zero of `α` (only possible when `α` is real, e.g. without flux)
//! is crossed the same way but the step is marked singular and never brackets
//! a target.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::kernel::{CouplingKernel, CouplingResponse};
use crate::{Error, Result, C64};

/// Largest raw step of `Δθ` between grid points that the unwrapper trusts.
pub const MAX_GRID_STEP: f64 = PI / 2.0;
/// Distance (rad) from an odd multiple of π within which a local extremum of
/// `Δθ` counts as a target.
pub const STATIONARY_TOLERANCE: f64 = 0.05;
/// Root tolerance (GHz) for target refinement.
pub const TARGET_TOLERANCE_GHZ: f64 = 1e-9;

const ARG_STEP: f64 = PI / 8.0;
const ZERO_WIDTH: f64 = 1e-10;
const CLUSTER_WIDTH: f64 = 1e-9;

/// Sense of circulation at a target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Transmission 1 → 2 → 3 → 1.
    #[serde(rename = "CW")]
    Clockwise,
    /// Transmission 1 → 3 → 2 → 1.
    #[serde(rename = "CCW")]
    CounterClockwise,
}

impl Direction {
    /// Direction for `Δθ = mπ`, `m` odd.
    pub fn from_multiple(m: i32) -> Self {
        if m.rem_euclid(4) == 3 {
            Direction::Clockwise
        } else {
            Direction::CounterClockwise
        }
    }

    /// `(to, from)` port indices (0-based) of the forward transmission out of port 1.
    pub fn forward_from_first(&self) -> (usize, usize) {
        match self {
            Direction::Clockwise => (1, 0),
            Direction::CounterClockwise => (2, 0),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Direction::Clockwise => "CW",
            Direction::CounterClockwise => "CCW",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// `Δθ` passes through the odd multiple.
    Crossing,
    /// `Δθ` touches the odd multiple at a local extremum.
    Stationary,
}

/// A frequency where `Δθ` reaches an odd multiple of π.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub omega_ghz: f64,
    /// Odd integer `m` with `Δθ = mπ`.
    pub multiple: i32,
    /// Branch `k` with `m = 2k + 1`.
    pub branch: i32,
    pub direction: Direction,
    pub kind: TargetKind,
    /// `Δθ` evaluated at `omega_ghz`.
    pub delta_theta: f64,
}

impl Target {
    fn new(omega_ghz: f64, multiple: i32, kind: TargetKind, delta_theta: f64) -> Self {
        Self {
            omega_ghz,
            multiple,
            branch: (multiple - 1).div_euclid(2),
            direction: Direction::from_multiple(multiple),
            kind,
            delta_theta,
        }
    }
}

/// Unwrapped `Δθ(ω)` on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseProfile {
    pub omega: Vec<f64>,
    pub delta_theta: Vec<f64>,
    /// Steps `k` (from `omega[k]` to `omega[k+1]`) that pass a pole or a real zero of `α`.
    pub singular_steps: Vec<usize>,
}

impl PhaseProfile {
    pub fn is_singular(&self, step: usize) -> bool {
        self.singular_steps.binary_search(&step).is_ok()
    }
}

/// Unwraps `6·arg α` along the response grid, anchored at the principal value
/// of `arg α` at the first grid point.
pub fn phase_difference(cr: &CouplingResponse) -> Result<PhaseProfile> {
    let n = cr.omega.len();
    if n == 0 {
        return Err(Error::invalid("omega", "empty frequency grid"));
    }
    if cr.omega.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("omega", "frequency grid must be strictly increasing"));
    }
    let kernel = &cr.kernel;
    let mut delta_theta = Vec::with_capacity(n);
    let mut singular_steps = Vec::new();
    delta_theta.push(6.0 * cr.alpha[0].arg());
    for k in 0..n - 1 {
        let (a, b) = (cr.omega[k], cr.omega[k + 1]);
        let (aa, ab) = (cr.alpha[k], cr.alpha[k + 1]);
        let clusters = pole_clusters(kernel, a, b);
        let step = if !clusters.is_empty() {
            singular_steps.push(k);
            detour_arg_change(kernel, a, b, aa, ab, &clusters).0
        } else {
            let raw = wrap(ab.arg() - aa.arg());
            if 6.0 * raw.abs() < MAX_GRID_STEP {
                raw
            } else {
                let (change, singular) = real_arg_change(kernel, a, b, aa, ab);
                if !singular {
                    return Err(Error::Undersampled {
                        omega: a,
                        step: 6.0 * raw,
                    });
                }
                singular_steps.push(k);
                change
            }
        };
        delta_theta.push(delta_theta[k] + 6.0 * step);
    }
    Ok(PhaseProfile {
        omega: cr.omega.clone(),
        delta_theta,
        singular_steps,
    })
}

/// Samples `T` on `[lo, hi]` starting from spacing `step`, bisecting grid steps
/// until every regular step of `Δθ` stays below `MAX_GRID_STEP / 2`, then unwraps.
pub fn scan(kernel: &CouplingKernel, lo: f64, hi: f64, step: f64) -> Result<(CouplingResponse, PhaseProfile)> {
    if !(lo < hi) || !(step > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(
            "band",
            format!("need lo < hi and step > 0, got [{lo}, {hi}] step {step}"),
        ));
    }
    let count = ((hi - lo) / step).ceil() as usize;
    if count > 50_000_000 {
        return Err(Error::invalid("step", "frequency grid too large"));
    }
    let clear = |w: f64| kernel.poles().iter().all(|p| (w - p).abs() >= 10.0 * kernel.guard());
    let mut base: Vec<f64> = (0..=count)
        .map(|i| (lo + i as f64 * step).min(hi))
        .filter(|&w| clear(w))
        .collect();
    base.dedup();
    let mut grid = Vec::with_capacity(base.len());
    let mut alphas = Vec::with_capacity(base.len());
    for pair in base.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if grid.is_empty() {
            grid.push(a);
            alphas.push(kernel.alpha(C64::new(a, 0.0)));
        }
        let aa = *alphas.last().expect("seeded");
        let ab = kernel.alpha(C64::new(b, 0.0));
        refine_into(kernel, a, b, aa, ab, &mut grid, &mut alphas, 0)?;
        grid.push(b);
        alphas.push(ab);
    }
    if grid.is_empty() {
        return Err(Error::invalid("band", "no admissible frequencies in the band"));
    }
    let cr = CouplingResponse::sample(kernel, &grid)?;
    let profile = phase_difference(&cr)?;
    Ok((cr, profile))
}

#[allow(clippy::too_many_arguments)]
fn refine_into(
    kernel: &CouplingKernel,
    a: f64,
    b: f64,
    aa: C64,
    ab: C64,
    grid: &mut Vec<f64>,
    alphas: &mut Vec<C64>,
    depth: usize,
) -> Result<()> {
    if !pole_clusters(kernel, a, b).is_empty() || b - a < 1e-9 || depth > 60 {
        return Ok(());
    }
    if 6.0 * wrap(ab.arg() - aa.arg()).abs() < 0.5 * MAX_GRID_STEP {
        return Ok(());
    }
    if grid.len() > 10_000_000 {
        return Err(Error::Undersampled {
            omega: a,
            step: 6.0 * wrap(ab.arg() - aa.arg()),
        });
    }
    let m = 0.5 * (a + b);
    let am = kernel.alpha(C64::new(m, 0.0));
    refine_into(kernel, a, m, aa, am, grid, alphas, depth + 1)?;
    grid.push(m);
    alphas.push(am);
    refine_into(kernel, m, b, am, ab, grid, alphas, depth + 1)
}

/// Targets on regular steps of the profile, ascending in frequency.
pub fn find_targets(cr: &CouplingResponse, profile: &PhaseProfile) -> Result<Vec<Target>> {
    let kernel = &cr.kernel;
    let w = &profile.omega;
    let th = &profile.delta_theta;
    let n = w.len();
    let mut targets = Vec::new();
    // Δθ at x inside the regular steps following grid index `k`
    let theta_from = |k: usize, x: f64| th[k] + 6.0 * wrap(kernel.alpha(C64::new(x, 0.0)).arg() - cr.alpha[k].arg());

    for k in 0..n.saturating_sub(1) {
        if profile.is_singular(k) {
            continue;
        }
        let (lo, hi) = (th[k].min(th[k + 1]), th[k].max(th[k + 1]));
        for m in odd_multiples_in(lo, hi) {
            let level = m as f64 * PI;
            let (fa, fb) = (th[k] - level, th[k + 1] - level);
            if fa == 0.0 {
                targets.push(Target::new(w[k], m, TargetKind::Crossing, th[k]));
                continue;
            }
            if fa * fb > 0.0 || fb == 0.0 {
                continue;
            }
            let x = bisect(|x| theta_from(k, x) - level, w[k], w[k + 1], fa);
            targets.push(Target::new(x, m, TargetKind::Crossing, theta_from(k, x)));
        }
    }

    for k in 1..n.saturating_sub(1) {
        if profile.is_singular(k - 1) || profile.is_singular(k) {
            continue;
        }
        let (s1, s2) = (th[k] - th[k - 1], th[k + 1] - th[k]);
        if s1 * s2 >= 0.0 {
            continue;
        }
        let maximum = s1 > 0.0;
        let sign = if maximum { 1.0 } else { -1.0 };
        let f = |x: f64| theta_from(k - 1, x);
        let x = golden_extremum(|x| -sign * f(x), w[k - 1], w[k + 1]);
        let v = f(x);
        let m = nearest_odd(v / PI);
        let level = m as f64 * PI;
        let grid_side = (th[k] - level).signum();
        let grid_clear = [th[k - 1], th[k], th[k + 1]]
            .iter()
            .all(|t| (t - level).signum() == grid_side);
        if !grid_clear {
            continue;
        }
        if (v - level).signum() == grid_side {
            if (v - level).abs() <= STATIONARY_TOLERANCE {
                targets.push(Target::new(x, m, TargetKind::Stationary, v));
            }
        } else {
            // narrow excursion through the level between grid points
            let g = |y: f64| f(y) - level;
            let left = bisect(g, w[k - 1], x, g(w[k - 1]));
            let right = bisect(g, x, w[k + 1], g(x));
            targets.push(Target::new(left, m, TargetKind::Crossing, f(left)));
            targets.push(Target::new(right, m, TargetKind::Crossing, f(right)));
        }
    }
    targets.sort_by(|a, b| a.omega_ghz.total_cmp(&b.omega_ghz));
    targets
        .dedup_by(|a, b| (a.omega_ghz - b.omega_ghz).abs() < 10.0 * TARGET_TOLERANCE_GHZ && a.multiple == b.multiple);
    Ok(targets)
}

fn odd_multiples_in(lo: f64, hi: f64) -> impl Iterator<Item = i32> {
    let first = ((lo / PI - 1.0) / 2.0).ceil() as i32;
    let last = ((hi / PI - 1.0) / 2.0).floor() as i32;
    (first..=last).map(|k| 2 * k + 1)
}

fn nearest_odd(x: f64) -> i32 {
    2 * ((x - 1.0) / 2.0).round() as i32 + 1
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    while b - a > TARGET_TOLERANCE_GHZ {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// Minimizer of `f` on `[a, b]`.
fn golden_extremum(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > TARGET_TOLERANCE_GHZ {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Groups of poles strictly inside `(a, b)`, merged when closer than `CLUSTER_WIDTH`.
fn pole_clusters(kernel: &CouplingKernel, a: f64, b: f64) -> Vec<(f64, f64)> {
    let mut clusters: Vec<(f64, f64)> = Vec::new();
    let mut inside: Vec<f64> = kernel.poles().iter().copied().filter(|&p| a < p && p < b).collect();
    inside.sort_by(f64::total_cmp);
    for p in inside {
        match clusters.last_mut() {
            Some(c) if p - c.1 < CLUSTER_WIDTH => c.1 = p,
            _ => clusters.push((p, p)),
        }
    }
    clusters
}

/// Arg change of `α` along `[a, b]` detouring above each pole cluster.
fn detour_arg_change(
    kernel: &CouplingKernel,
    a: f64,
    b: f64,
    aa: C64,
    ab: C64,
    clusters: &[(f64, f64)],
) -> (f64, bool) {
    let mut marks = vec![a];
    for c in clusters {
        marks.push(c.0);
        marks.push(c.1);
    }
    marks.push(b);
    let min_gap = marks
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    let mut singular = false;
    let mut x = a;
    let mut ax = aa;
    for &(p0, p1) in clusters {
        let rho = 0.1 * min_gap.min(b - a) + 0.5 * (p1 - p0);
        let center = 0.5 * (p0 + p1);
        let left = center - rho;
        let right = center + rho;
        let al = kernel.alpha(C64::new(left, 0.0));
        let (d, s) = real_arg_change(kernel, x, left, ax, al);
        total += d;
        singular |= s;
        let arc = |s: f64| C64::new(center, 0.0) + C64::from_polar(rho, PI * (1.0 - s));
        let ar = kernel.alpha(C64::new(right, 0.0));
        total += path_arg_change(kernel, &arc, 0.0, 1.0, al, ar, 0).unwrap_or_else(|| wrap(ar.arg() - al.arg()));
        x = right;
        ax = ar;
    }
    let (d, s) = real_arg_change(kernel, x, b, ax, ab);
    (total + d, singular | s)
}

/// Arg change along the real segment `[a, b]`; goes over any real zero of `α`
/// on a small semicircle and reports it.
fn real_arg_change(kernel: &CouplingKernel, a: f64, b: f64, aa: C64, ab: C64) -> (f64, bool) {
    let d = wrap(ab.arg() - aa.arg());
    if d.abs() <= ARG_STEP {
        return (d, false);
    }
    if b - a < ZERO_WIDTH * a.abs().max(1.0) {
        let center = 0.5 * (a + b);
        let rho = 0.5 * (b - a);
        let arc = |s: f64| C64::new(center, 0.0) + C64::from_polar(rho, PI * (1.0 - s));
        let change = path_arg_change(kernel, &arc, 0.0, 1.0, aa, ab, 0).unwrap_or(d);
        return (change, true);
    }
    let m = 0.5 * (a + b);
    let am = kernel.alpha(C64::new(m, 0.0));
    let (d1, s1) = real_arg_change(kernel, a, m, aa, am);
    let (d2, s2) = real_arg_change(kernel, m, b, am, ab);
    (d1 + d2, s1 | s2)
}

fn path_arg_change(
    kernel: &CouplingKernel,
    path: &dyn Fn(f64) -> C64,
    s0: f64,
    s1: f64,
    a0: C64,
    a1: C64,
    depth: usize,
) -> Option<f64> {
    let d = wrap(a1.arg() - a0.arg());
    if d.abs() <= ARG_STEP {
        return Some(d);
    }
    if depth >= 48 {
        return None;
    }
    let sm = 0.5 * (s0 + s1);
    let am = kernel.alpha(path(sm));
    Some(
        path_arg_change(kernel, path, s0, sm, a0, am, depth + 1)?
            + path_arg_change(kernel, path, sm, s1, am, a1, depth + 1)?,
    )
}

pub(crate) fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}
