//! Run configuration: a single JSON document, every block optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vortex_circulator::{CircuitParams, NoiseConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub circuit: CircuitParams,
    pub external: ExternalBlock,
    pub flux_sweep: FluxSweepBlock,
    pub frequency_scan: FrequencyScanBlock,
    pub smatrix: SMatrixBlock,
    pub vortex: VortexBlock,
    pub noise: NoiseConfig,
    pub convergence: ConvergenceBlock,
    pub output_dir: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
}

/// Resonator coupling; `κ` and `ω_R` default to the tuned values of the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExternalBlock {
    pub g_ghz: f64,
    pub kappa_ghz: Option<f64>,
    pub omega_r_ghz: Option<f64>,
}

impl Default for ExternalBlock {
    fn default() -> Self {
        Self {
            g_ghz: 1.6,
            kappa_ghz: None,
            omega_r_ghz: None,
        }
    }
}

/// Uniform grid over the frustration `A`, endpoints included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluxSweepBlock {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub levels: usize,
}

impl Default for FluxSweepBlock {
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: 0.5,
            points: 101,
            levels: 20,
        }
    }
}

impl FluxSweepBlock {
    pub fn grid(&self) -> Vec<f64> {
        linspace(self.start, self.stop, self.points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencyScanBlock {
    pub lo_ghz: f64,
    pub hi_ghz: f64,
    pub step_ghz: f64,
}

impl Default for FrequencyScanBlock {
    fn default() -> Self {
        Self {
            lo_ghz: 0.01,
            hi_ghz: 8.0,
            step_ghz: 2e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SMatrixBlock {
    /// 1-based index into the targets found by the frequency scan.
    pub target: usize,
    pub half_width_ghz: f64,
    pub points: usize,
}

impl Default for SMatrixBlock {
    fn default() -> Self {
        Self {
            target: 4,
            half_width_ghz: 1.5,
            points: 10001,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VortexBlock {
    pub a_start: f64,
    pub a_stop: f64,
    pub a_points: usize,
    /// Levels whose diagonal current expectations are reported.
    pub levels: usize,
    /// Superposition traces use levels 0 and `superposition_level` with equal weights.
    pub superposition_level: usize,
    /// Island driven in the linear-response traces (1-based).
    pub drive_island: usize,
    pub response_levels: Vec<usize>,
    pub t_stop: f64,
    pub t_points: usize,
}

impl Default for VortexBlock {
    fn default() -> Self {
        Self {
            a_start: 0.0,
            a_stop: 1.0,
            a_points: 51,
            levels: 3,
            superposition_level: 1,
            drive_island: 1,
            response_levels: vec![1, 2],
            t_stop: 2.0,
            t_points: 401,
        }
    }
}

impl VortexBlock {
    pub fn a_grid(&self) -> Vec<f64> {
        linspace(self.a_start, self.a_stop, self.a_points)
    }

    pub fn t_grid(&self) -> Vec<f64> {
        linspace(0.0, self.t_stop, self.t_points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceBlock {
    pub levels: usize,
    pub tolerance_ghz: f64,
}

impl Default for ConvergenceBlock {
    fn default() -> Self {
        Self {
            levels: 20,
            tolerance_ghz: 1e-6,
        }
    }
}

pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        n => (0..n)
            .map(|k| start + (stop - start) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Checks every block, including those the current command does not use.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        self.circuit
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("circuit: {e}")))?;
        if !(self.external.g_ghz.is_finite() && self.external.g_ghz > 0.0) {
            return invalid(format!("external.g_ghz must be positive, got {}", self.external.g_ghz));
        }
        if let Some(k) = self.external.kappa_ghz {
            if !(k.is_finite() && k > 0.0) {
                return invalid(format!("external.kappa_ghz must be positive, got {k}"));
            }
        }
        if self.external.omega_r_ghz.is_some_and(|w| !w.is_finite()) {
            return invalid("external.omega_r_ghz must be finite".into());
        }
        let fs = &self.flux_sweep;
        if fs.points == 0 || fs.levels == 0 || !(fs.start.is_finite() && fs.stop.is_finite()) {
            return invalid("flux_sweep needs finite bounds, points >= 1 and levels >= 1".into());
        }
        if fs.points > 1 && !(fs.start < fs.stop) {
            return invalid(format!(
                "flux_sweep needs start < stop, got [{}, {}]",
                fs.start, fs.stop
            ));
        }
        let sc = &self.frequency_scan;
        if !(sc.lo_ghz > 0.0 && sc.lo_ghz < sc.hi_ghz && sc.hi_ghz.is_finite() && sc.step_ghz > 0.0) {
            return invalid(format!(
                "frequency_scan needs 0 < lo < hi and step > 0, got lo {} hi {} step {}",
                sc.lo_ghz, sc.hi_ghz, sc.step_ghz
            ));
        }
        let sm = &self.smatrix;
        if sm.target == 0 || sm.points < 2 || !(sm.half_width_ghz.is_finite() && sm.half_width_ghz > 0.0) {
            return invalid("smatrix needs target >= 1, points >= 2 and half_width_ghz > 0".into());
        }
        let vx = &self.vortex;
        if vx.a_points == 0 || vx.levels < 2 || vx.t_points == 0 || !(vx.t_stop >= 0.0) {
            return invalid("vortex needs a_points >= 1, levels >= 2, t_points >= 1 and t_stop >= 0".into());
        }
        if vx.superposition_level == 0 || vx.superposition_level >= vx.levels {
            return invalid(format!(
                "vortex.superposition_level must lie in 1..{}, got {}",
                vx.levels, vx.superposition_level
            ));
        }
        if !(1..=3).contains(&vx.drive_island) {
            return invalid(format!(
                "vortex.drive_island must be 1, 2 or 3, got {}",
                vx.drive_island
            ));
        }
        if vx.response_levels.contains(&0) {
            return invalid("vortex.response_levels must be excited levels (>= 1)".into());
        }
        self.noise
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("noise: {e}")))?;
        if self.convergence.levels == 0 || !(self.convergence.tolerance_ghz > 0.0) {
            return invalid("convergence needs levels >= 1 and tolerance_ghz > 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.circuit.a_loops, [0.2484; 3]);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_blocks_keep_remaining_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"circuit": {"n_max": 2}, "noise": {"sigma": 0.1}}"#).unwrap();
        assert_eq!(cfg.circuit.n_max, 2);
        assert_eq!(cfg.circuit.ej_ghz, 30.0);
        assert_eq!(cfg.noise.sigma, 0.1);
        assert_eq!(cfg.noise.samples, 1000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"circut": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"circuit": {"ej": 3}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"format": "parquet"}"#).is_err());
    }

    #[test]
    fn validation_catches_bad_blocks() {
        let mut cfg = RunConfig::default();
        cfg.smatrix.target = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.vortex.drive_island = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.circuit.ec_ghz = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn linspace_includes_endpoints() {
        assert_eq!(linspace(0.0, 0.5, 3), vec![0.0, 0.25, 0.5]);
        assert_eq!(linspace(0.3, 0.9, 1), vec![0.3]);
    }
}
