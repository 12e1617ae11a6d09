//! Subcommands. Each one computes all of its artifacts in memory first, so a
//! failure never leaves partial files behind.

use std::path::Path;

use serde::Serialize;
use serde_json::json;
use vortex_circulator::noise::run_study;
use vortex_circulator::scattering::{
    bandwidth_around, find_targets, power_to_db, s_matrix, scan, tune_external, Target,
};
use vortex_circulator::spectral::{convergence_check_with, sweep_flux};
use vortex_circulator::vortex::{
    directionality, linear_response_terms, loop_currents, matrix_elements, superposition_current, PHASE_TOLERANCE,
};
use vortex_circulator::{
    diagonalize, voltage_ops, CircuitParams, CouplingKernel, CouplingResponse, ExternalParams, PhaseProfile, C64,
};

use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Numeric(vortex_circulator::Error),
    #[error("{0}")]
    NoTargets(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl From<vortex_circulator::Error> for CommandError {
    fn from(e: vortex_circulator::Error) -> Self {
        match e {
            vortex_circulator::Error::InvalidParameter { .. } => CommandError::Config(e.to_string()),
            other => CommandError::Numeric(other),
        }
    }
}

impl From<csv::Error> for CommandError {
    fn from(e: csv::Error) -> Self {
        CommandError::Io {
            path: "<csv buffer>".into(),
            source: std::io::Error::other(e),
        }
    }
}

pub type CommandResult<T> = Result<T, CommandError>;

/// One output file, fully rendered.
pub struct Artifact {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> CommandResult<()> {
    let io = |path: &Path, source| CommandError::Io {
        path: path.display().to_string(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    for a in artifacts {
        let path = dir.join(a.name);
        std::fs::write(&path, &a.bytes).map_err(|e| io(&path, e))?;
    }
    Ok(())
}

/// Shortest decimal that round-trips to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn csv_artifact(name: &'static str, header: &[String], rows: &[Vec<String>]) -> CommandResult<Artifact> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| CommandError::Io {
        path: name.into(),
        source: std::io::Error::other(e.to_string()),
    })?;
    Ok(Artifact { name, bytes })
}

fn json_artifact(name: &'static str, value: &impl Serialize) -> CommandResult<Artifact> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CommandError::Io {
        path: name.into(),
        source: std::io::Error::other(e),
    })?;
    bytes.push(b'\n');
    Ok(Artifact { name, bytes })
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn spectrum(cfg: &RunConfig) -> CommandResult<Vec<Artifact>> {
    let grid = cfg.flux_sweep.grid();
    let sweep = sweep_flux(&cfg.circuit, &grid, cfg.flux_sweep.levels)?;
    let mut rows = Vec::new();
    for (a, levels) in sweep.a_grid.iter().zip(&sweep.levels) {
        for (n, e) in levels.iter().enumerate() {
            rows.push(vec![num(*a), n.to_string(), num(*e)]);
        }
    }
    println!(
        "spectrum: {} flux points, {} levels, {} crossings",
        grid.len(),
        cfg.flux_sweep.levels,
        sweep.crossings.len()
    );
    Ok(vec![
        csv_artifact("spectrum.csv", &header(&["a", "level", "energy_ghz"]), &rows)?,
        json_artifact("crossings.json", &sweep.crossings)?,
    ])
}

/// Kernel, phase profile and targets of the configured circuit.
struct PhaseScan {
    kernel: CouplingKernel,
    response: CouplingResponse,
    profile: PhaseProfile,
    targets: Vec<Target>,
}

fn phase_scan(cfg: &RunConfig) -> CommandResult<PhaseScan> {
    let kernel = CouplingKernel::from_params(&cfg.circuit)?;
    let sc = &cfg.frequency_scan;
    let (response, profile) = scan(&kernel, sc.lo_ghz, sc.hi_ghz, sc.step_ghz)?;
    let targets = find_targets(&response, &profile)?;
    Ok(PhaseScan {
        kernel,
        response,
        profile,
        targets,
    })
}

/// Tuned external parameters with the config overrides applied.
fn external_for(cfg: &RunConfig, kernel: &CouplingKernel, target: &Target) -> CommandResult<ExternalParams> {
    let mut ext = tune_external(kernel, target, cfg.external.g_ghz)?;
    if let Some(k) = cfg.external.kappa_ghz {
        ext.kappa_ghz = k;
    }
    if let Some(w) = cfg.external.omega_r_ghz {
        ext.omega_r_ghz = w;
    }
    ext.validate()?;
    Ok(ext)
}

fn select_target(scan: &PhaseScan, index: usize) -> CommandResult<&Target> {
    scan.targets.get(index.wrapping_sub(1)).ok_or_else(|| {
        CommandError::NoTargets(format!(
            "target {index} requested but the scan found {} target(s)",
            scan.targets.len()
        ))
    })
}

fn target_json(index: usize, t: &Target, ext: &ExternalParams) -> serde_json::Value {
    json!({
        "index": index,
        "omega_t_ghz": t.omega_ghz,
        "multiple_of_pi": t.multiple,
        "branch": t.branch,
        "direction": t.direction.label(),
        "kind": t.kind,
        "delta_theta": t.delta_theta,
        "kappa_ghz": ext.kappa_ghz,
        "omega_r_ghz": ext.omega_r_ghz,
    })
}

pub fn phase(cfg: &RunConfig) -> CommandResult<Vec<Artifact>> {
    let ps = phase_scan(cfg)?;
    let rows: Vec<Vec<String>> = ps
        .profile
        .omega
        .iter()
        .zip(&ps.profile.delta_theta)
        .zip(ps.response.alpha.iter().zip(&ps.response.beta))
        .map(|((w, dt), (a, b))| vec![num(*w), num(*dt), num(a.norm()), num(*b)])
        .collect();
    let mut targets = Vec::new();
    for (i, t) in ps.targets.iter().enumerate() {
        let ext = tune_external(&ps.kernel, t, cfg.external.g_ghz)?;
        targets.push(target_json(i + 1, t, &ext));
    }
    println!("phase: {} grid points, {} targets", rows.len(), targets.len());
    Ok(vec![
        csv_artifact(
            "phase.csv",
            &header(&["omega_ghz", "delta_theta", "alpha_abs", "beta"]),
            &rows,
        )?,
        json_artifact(
            "targets.json",
            &json!({ "g_ghz": cfg.external.g_ghz, "targets": targets }),
        )?,
    ])
}

const PORT_LABELS: [&str; 3] = ["1", "2", "3"];

fn s_label(to: usize, from: usize) -> String {
    format!("S{}{}", PORT_LABELS[to], PORT_LABELS[from])
}

pub fn smatrix(cfg: &RunConfig) -> CommandResult<Vec<Artifact>> {
    let ps = phase_scan(cfg)?;
    let index = cfg.smatrix.target;
    let target = select_target(&ps, index)?;
    let ext = external_for(cfg, &ps.kernel, target)?;
    let hw = cfg.smatrix.half_width_ghz;
    let grid: Vec<f64> = crate::config::linspace(target.omega_ghz - hw, target.omega_ghz + hw, cfg.smatrix.points)
        .into_iter()
        .filter(|&w| w > 0.0 && ps.kernel.check_guard(w).is_ok())
        .collect();
    let sm = s_matrix(&ps.kernel, &ext, &grid)?;

    let mut names = vec!["omega_ghz".to_string()];
    for to in 0..3 {
        for from in 0..3 {
            names.push(format!("{}_db", s_label(to, from)));
        }
    }
    names.extend((1..=3).map(|i| format!("row_sum_{i}")));
    let rows: Vec<Vec<String>> = sm
        .omega
        .iter()
        .zip(&sm.s)
        .map(|(w, s)| {
            let mut row = vec![num(*w)];
            for to in 0..3 {
                for from in 0..3 {
                    row.push(num(power_to_db(s[(to, from)].norm_sqr())));
                }
            }
            for to in 0..3 {
                row.push(num((0..3).map(|from| s[(to, from)].norm_sqr()).sum::<f64>()));
            }
            row
        })
        .collect();

    let (to, from) = ext.direction.forward_from_first();
    let bw = bandwidth_around(&sm, to, from, target.omega_ghz);
    println!(
        "smatrix: target {index} at {:.6} GHz ({}), {} bandwidth {:.6} GHz",
        target.omega_ghz,
        ext.direction.label(),
        s_label(to, from),
        bw.width_ghz
    );
    let summary = json!({
        "target": target_json(index, target, &ext),
        "external": {
            "g_ghz": ext.g_ghz,
            "kappa_ghz": ext.kappa_ghz,
            "omega_r_ghz": ext.omega_r_ghz,
        },
        "transmission": s_label(to, from),
        "bandwidth_ghz": bw.width_ghz,
        "lower_ghz": bw.lower_ghz,
        "upper_ghz": bw.upper_ghz,
        "peak_omega_ghz": bw.peak_omega_ghz,
        "peak_power": bw.peak_power,
        "clipped": bw.clipped,
        "unitarity_error": sm.unitarity_error(),
    });
    Ok(vec![
        csv_artifact("smatrix.csv", &names, &rows)?,
        json_artifact("bandwidth.json", &summary)?,
    ])
}

pub fn vortex(cfg: &RunConfig) -> CommandResult<Vec<Artifact>> {
    let vx = &cfg.vortex;
    let a_grid = vx.a_grid();
    let pairs: Vec<(usize, usize)> = (1..vx.levels).map(|n| (0, n)).collect();

    let per_flux: Vec<_> = {
        use rayon::prelude::*;
        a_grid
            .par_iter()
            .map(|&a| vortex_at_flux(&cfg.circuit.clone().with_flux(a), vx.levels, &pairs))
            .collect::<CommandResult<Vec<_>>>()?
    };

    let mut expectation_rows = Vec::new();
    let mut element_rows = Vec::new();
    let mut theta_rows = Vec::new();
    for (a, point) in a_grid.iter().zip(&per_flux) {
        for (n, cur) in point.expectations.iter().enumerate() {
            let mut row = vec![num(*a), n.to_string()];
            row.extend(cur.iter().map(|x| num(*x)));
            expectation_rows.push(row);
        }
        let mut theta_row = vec![num(*a)];
        for p in &point.pairs {
            let mut row = vec![num(*a), p.m.to_string(), p.n.to_string()];
            match &p.magnitudes {
                Some(mags) => row.extend(mags.iter().map(|x| num(*x))),
                None => row.extend(std::iter::repeat_n(String::new(), 3)),
            }
            let theta = p.theta.map(|t| t.to_string()).unwrap_or_default();
            row.push(theta.clone());
            row.push(p.status.clone());
            element_rows.push(row);
            theta_row.push(theta);
        }
        theta_rows.push(theta_row);
    }

    let (superposition_rows, response_rows) = vortex_traces(cfg)?;

    let mut theta_header = vec!["a".to_string()];
    theta_header.extend(pairs.iter().map(|(m, n)| format!("theta_{m}{n}")));
    println!("vortex: {} flux points, {} level pairs", a_grid.len(), pairs.len());
    Ok(vec![
        csv_artifact(
            "vortex_expectations.csv",
            &header(&["a", "level", "i1", "i2", "i3"]),
            &expectation_rows,
        )?,
        csv_artifact(
            "vortex_elements.csv",
            &header(&["a", "m", "n", "abs_i1", "abs_i2", "abs_i3", "theta", "status"]),
            &element_rows,
        )?,
        csv_artifact("vortex_theta.csv", &theta_header, &theta_rows)?,
        csv_artifact(
            "vortex_superposition.csv",
            &header(&["t", "i1", "i2", "i3"]),
            &superposition_rows,
        )?,
        csv_artifact(
            "vortex_response.csv",
            &header(&["t", "level", "p1", "p2", "p3"]),
            &response_rows,
        )?,
    ])
}

struct PairRow {
    m: usize,
    n: usize,
    magnitudes: Option<[f64; 3]>,
    theta: Option<i8>,
    status: String,
}

struct FluxPoint {
    expectations: Vec<[f64; 3]>,
    pairs: Vec<PairRow>,
}

fn vortex_at_flux(params: &CircuitParams, levels: usize, pairs: &[(usize, usize)]) -> CommandResult<FluxPoint> {
    let spec = diagonalize(params, levels)?;
    let lc = loop_currents(params)?;
    let expectations = (0..levels)
        .map(|n| std::array::from_fn(|i| spec.expectation(&lc.currents[i], n).re))
        .collect();
    let pairs = pairs
        .iter()
        .map(|&(m, n)| {
            let me = match matrix_elements(&spec, &lc, &[(m, n)]) {
                Ok(me) => me,
                Err(e @ vortex_circulator::Error::Degenerate { .. }) => {
                    return Ok(PairRow {
                        m,
                        n,
                        magnitudes: None,
                        theta: None,
                        status: e.to_string(),
                    })
                }
                Err(e) => return Err(e.into()),
            };
            let elements = me.get(m, n).expect("requested pair");
            let (theta, status) = match directionality(&elements, PHASE_TOLERANCE) {
                Ok(d) => (Some(d.theta), "ok".to_string()),
                Err(e) => (None, e.to_string()),
            };
            Ok(PairRow {
                m,
                n,
                magnitudes: Some(elements.magnitudes()),
                theta,
                status,
            })
        })
        .collect::<CommandResult<Vec<_>>>()?;
    Ok(FluxPoint { expectations, pairs })
}

type Rows = Vec<Vec<String>>;

/// Superposition and linear-response traces at the configured circuit.
fn vortex_traces(cfg: &RunConfig) -> CommandResult<(Rows, Rows)> {
    let vx = &cfg.vortex;
    let t_grid = vx.t_grid();
    let k = vx
        .response_levels
        .iter()
        .map(|n| n + 1)
        .chain([vx.levels])
        .max()
        .unwrap_or(vx.levels);
    let spec = diagonalize(&cfg.circuit, k)?;
    let lc = loop_currents(&cfg.circuit)?;

    let pair = (0, vx.superposition_level);
    let me = matrix_elements(&spec, &lc, &[pair])?;
    let w = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let omega = spec.energy(pair.0) - spec.energy(pair.1);
    let traces = superposition_current(&me, pair, w, w, omega, &t_grid)?;
    let superposition = t_grid
        .iter()
        .enumerate()
        .map(|(k, t)| vec![num(*t), num(traces[0][k]), num(traces[1][k]), num(traces[2][k])])
        .collect();

    let voltages = voltage_ops(&cfg.circuit)?;
    let rt = linear_response_terms(&spec, &lc, &voltages, vx.drive_island - 1, &t_grid, &vx.response_levels)?;
    let mut response = Vec::new();
    for (level, tr) in rt.levels.iter().zip(&rt.traces) {
        for (k, t) in t_grid.iter().enumerate() {
            response.push(vec![
                num(*t),
                level.to_string(),
                num(tr[0][k]),
                num(tr[1][k]),
                num(tr[2][k]),
            ]);
        }
    }
    Ok((superposition, response))
}

pub fn noise(cfg: &RunConfig) -> CommandResult<Vec<Artifact>> {
    let ps = phase_scan(cfg)?;
    let index = cfg.smatrix.target;
    let target = select_target(&ps, index)?;
    let ext = external_for(cfg, &ps.kernel, target)?;
    let study = run_study(&cfg.circuit, &ext, &cfg.noise)?;

    let rows: Vec<Vec<String>> = study
        .samples
        .iter()
        .map(|s| {
            let (er, il) = s.metrics.map(|m| (num(m.er0_db), num(m.il0_db))).unwrap_or_default();
            vec![
                s.index.to_string(),
                er,
                il,
                s.passed.to_string(),
                s.failure.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let nc = &study.config;
    let summary = json!({
        "kind": nc.kind,
        "sigma": nc.sigma,
        "samples": nc.samples,
        "seed": nc.seed,
        "flux_convention": nc.flux_convention,
        "band_ghz": study.band_ghz,
        "step_ghz": nc.step_ghz,
        "pair": [nc.pair[0] + 1, nc.pair[1] + 1],
        "threshold_db": nc.threshold_db,
        "failures": study.failures,
        "yield": study.yield_fraction,
        "quartiles_er0_db": study.quartiles,
        "target": target_json(index, target, &ext),
        "g_ghz": ext.g_ghz,
    });
    match study.quartiles {
        Some(q) => println!(
            "noise: {} samples, yield {:.3}, median ER0 {:.3} dB",
            nc.samples, study.yield_fraction, q.median
        ),
        None => println!(
            "noise: {} samples, yield {:.3}, no passing samples",
            nc.samples, study.yield_fraction
        ),
    }
    Ok(vec![
        csv_artifact(
            "noise_samples.csv",
            &header(&["sample", "er0_db", "il0_db", "passed", "failure"]),
            &rows,
        )?,
        json_artifact("noise_summary.json", &summary)?,
    ])
}

pub fn convergence(cfg: &RunConfig) -> CommandResult<Vec<Artifact>> {
    let c = &cfg.convergence;
    let report = convergence_check_with(&cfg.circuit, c.levels, c.tolerance_ghz)?;
    println!(
        "convergence: n_max {} -> {}, max shift {:.3e} GHz, {}",
        report.n_max,
        report.n_max + 1,
        report.max_shift_ghz,
        if report.passed { "converged" } else { "not converged" }
    );
    Ok(vec![json_artifact("convergence.json", &report)?])
}
