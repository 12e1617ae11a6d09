//! Monte Carlo studies of static charge-offset and flux disorder.
//!
//! Every sample `s` draws from its own stream: `ChaCha20Rng::seed_from_u64(seed)`
//! with `set_stream(s)`. Charge samples take three standard-normal draws (island
//! order) scaled by `σ`; flux samples take three draws, scale them by `σ`
//! (or `σ/√(2/3)` in the post-projection convention), subtract their mean and
//! set `Aᵢ = A(1 + Δ'ᵢ)`. A flux draw leaving `(0, 1)` is redrawn from the same
//! stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charge_basis::CircuitParams;
use crate::scattering::{s_at, CouplingKernel, ExternalParams, SMatrixSpectrum};
use crate::{Error, Result};

const MAX_FLUX_REDRAWS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `σ` in Cooper pairs added to each offset charge.
    Charge,
    /// `σ` as a fraction of the common frustration, zero-sum across loops.
    Flux,
}

/// Meaning of `σ` for flux noise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxConvention {
    /// `σ` is the spread of the raw draws; each projected `Δ'ᵢ` has spread `σ√(2/3)`.
    #[default]
    PreProjection,
    /// `σ` is the spread of each projected `Δ'ᵢ`.
    PostProjection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub samples: usize,
    pub seed: u64,
    /// Frequency band `[lo, hi]` (GHz) for the extrema; `None` means `ω_T ± 2`.
    pub band_ghz: Option<[f64; 2]>,
    pub step_ghz: f64,
    pub threshold_db: f64,
    /// Port pair `(i, j)`, 0-based, compared in both directions.
    pub pair: [usize; 2],
    pub flux_convention: FluxConvention,
}

fn default_step() -> f64 {
    2e-3
}

fn default_threshold() -> f64 {
    -1.0
}

fn default_pair() -> [usize; 2] {
    [0, 1]
}

impl Default for NoiseConfig {
    /// Charge noise at 0.35 Cooper pairs, 1000 samples, seed 0.
    fn default() -> Self {
        Self::new(NoiseKind::Charge, 0.35, 1000, 0)
    }
}

impl NoiseConfig {
    pub fn new(kind: NoiseKind, sigma: f64, samples: usize, seed: u64) -> Self {
        Self {
            kind,
            sigma,
            samples,
            seed,
            band_ghz: None,
            step_ghz: default_step(),
            threshold_db: default_threshold(),
            pair: default_pair(),
            flux_convention: FluxConvention::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid(
                "sigma",
                format!("must be non-negative, got {}", self.sigma),
            ));
        }
        if self.samples == 0 {
            return Err(Error::invalid("samples", "need at least one sample"));
        }
        if let Some([lo, hi]) = self.band_ghz {
            if !(lo < hi) {
                return Err(Error::invalid("band_ghz", format!("need lo < hi, got [{lo}, {hi}]")));
            }
        }
        if !(self.step_ghz.is_finite() && self.step_ghz > 0.0) {
            return Err(Error::invalid("step_ghz", "must be positive"));
        }
        let [i, j] = self.pair;
        if i >= 3 || j >= 3 || i == j {
            return Err(Error::invalid(
                "pair",
                format!("need two distinct ports in 0..3, got {:?}", self.pair),
            ));
        }
        Ok(())
    }

    /// Band actually scanned for a tuning at `omega_t`.
    pub fn band_for(&self, omega_t: f64) -> [f64; 2] {
        self.band_ghz.unwrap_or([omega_t - 2.0, omega_t + 2.0])
    }
}

/// Extremal extinction ratio and insertion loss of one device.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub er0_db: f64,
    pub il0_db: f64,
}

/// `20 log10 |x|` clamped at −300 dB.
fn amplitude_db(x: f64) -> f64 {
    if x > 0.0 {
        (20.0 * x.log10()).max(-300.0)
    } else {
        -300.0
    }
}

/// `ER₀ = min ER(ω)` and `IL₀ = max IL(ω)` over grid points inside `band`.
pub fn er_il(sm: &SMatrixSpectrum, pair: [usize; 2], band: [f64; 2]) -> Result<Metrics> {
    let [i, j] = pair;
    let mut er0 = f64::INFINITY;
    let mut il0 = f64::NEG_INFINITY;
    for (w, s) in sm.omega.iter().zip(&sm.s) {
        if *w < band[0] || *w > band[1] {
            continue;
        }
        let a = amplitude_db(s[(i, j)].norm());
        let b = amplitude_db(s[(j, i)].norm());
        er0 = er0.min(-(a - b).abs());
        il0 = il0.max(a.max(b));
    }
    if !er0.is_finite() {
        return Err(Error::invalid(
            "band",
            format!("no grid point inside [{}, {}]", band[0], band[1]),
        ));
    }
    Ok(Metrics {
        er0_db: er0,
        il0_db: il0,
    })
}

/// Generator for sample `index` of a study seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `N_g,i ← N_g,i + σ·zᵢ` with independent standard normals `zᵢ`.
pub fn sample_charge<R: Rng + ?Sized>(params: &CircuitParams, sigma: f64, rng: &mut R) -> CircuitParams {
    let mut out = params.clone();
    for ng in &mut out.ng {
        let z: f64 = rng.sample(StandardNormal);
        *ng += sigma * z;
    }
    out
}

/// Zero-sum flux disorder around a symmetric baseline.
pub fn sample_flux<R: Rng + ?Sized>(
    params: &CircuitParams,
    sigma: f64,
    convention: FluxConvention,
    rng: &mut R,
) -> Result<CircuitParams> {
    if !params.a_loops.iter().all(|&a| a == params.a_loops[0]) {
        return Err(Error::invalid("a_loops", "flux noise needs a symmetric baseline"));
    }
    let a = params.a_loops[0];
    let scale = match convention {
        FluxConvention::PreProjection => sigma,
        FluxConvention::PostProjection => sigma / (2.0f64 / 3.0).sqrt(),
    };
    for attempt in 0..MAX_FLUX_REDRAWS {
        let raw: [f64; 3] = std::array::from_fn(|_| scale * rng.sample::<f64, _>(StandardNormal));
        let mean = (raw[0] + raw[1] + raw[2]) / 3.0;
        let loops = raw.map(|d| a * (1.0 + (d - mean)));
        if loops.iter().all(|&x| x > 0.0 && x < 1.0) {
            let mut out = params.clone();
            out.a_loops = loops;
            return Ok(out);
        }
        log::debug!("flux draw {attempt} left (0, 1): {loops:?}; redrawing");
    }
    Err(Error::invalid(
        "sigma",
        format!("flux draws left (0, 1) {MAX_FLUX_REDRAWS} times; sigma {sigma} is too large"),
    ))
}

/// Type-7 (linear interpolation) quartiles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (v.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    Some(Quartiles {
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub index: usize,
    /// `None` when the sample failed numerically.
    pub metrics: Option<Metrics>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudy {
    pub config: NoiseConfig,
    pub band_ghz: [f64; 2],
    pub samples: Vec<SampleOutcome>,
    pub failures: usize,
    /// Fraction of successful samples with `IL₀ ≥ threshold_db`.
    pub yield_fraction: f64,
    /// Quartiles of `ER₀` over passing samples.
    pub quartiles: Option<Quartiles>,
}

impl NoiseStudy {
    pub fn passing_er0(&self) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|s| s.passed)
            .filter_map(|s| s.metrics.map(|m| m.er0_db))
            .collect()
    }
}

/// Frequencies from `lo` to `hi` in steps of `step`.
pub fn band_grid(band: [f64; 2], step: f64) -> Vec<f64> {
    let n = ((band[1] - band[0]) / step).round() as usize;
    (0..=n).map(|k| band[0] + k as f64 * step).collect()
}

/// S-matrix of a perturbed circuit under frozen external parameters. Grid
/// points within the pole guard of a transition are skipped.
pub fn perturbed_response(params: &CircuitParams, ext: &ExternalParams, grid: &[f64]) -> Result<SMatrixSpectrum> {
    let kernel = CouplingKernel::from_params(params)?;
    let mut omega = Vec::with_capacity(grid.len());
    let mut s = Vec::with_capacity(grid.len());
    for &w in grid {
        if kernel.check_guard(w).is_err() {
            continue;
        }
        s.push(s_at(&kernel, ext, w)?);
        omega.push(w);
    }
    Ok(SMatrixSpectrum { omega, s })
}

/// Draws one perturbed circuit for sample `index`.
pub fn draw_sample(base: &CircuitParams, cfg: &NoiseConfig, index: usize) -> Result<CircuitParams> {
    let mut rng = sample_rng(cfg.seed, index as u64);
    match cfg.kind {
        NoiseKind::Charge => Ok(sample_charge(base, cfg.sigma, &mut rng)),
        NoiseKind::Flux => sample_flux(base, cfg.sigma, cfg.flux_convention, &mut rng),
    }
}

pub fn run_study(base: &CircuitParams, ext: &ExternalParams, cfg: &NoiseConfig) -> Result<NoiseStudy> {
    base.validate()?;
    ext.validate()?;
    cfg.validate()?;
    let band = cfg.band_for(ext.omega_t_ghz);
    let grid = band_grid(band, cfg.step_ghz);
    let evaluate = |index: usize| -> Result<Metrics> {
        let params = draw_sample(base, cfg, index)?;
        let sm = perturbed_response(&params, ext, &grid)?;
        er_il(&sm, cfg.pair, band)
    };
    let samples: Vec<SampleOutcome> = (0..cfg.samples)
        .into_par_iter()
        .map(|index| match evaluate(index) {
            Ok(m) => SampleOutcome {
                index,
                metrics: Some(m),
                passed: m.il0_db >= cfg.threshold_db,
                failure: None,
            },
            Err(e) => {
                log::warn!("noise sample {index} failed: {e}");
                SampleOutcome {
                    index,
                    metrics: None,
                    passed: false,
                    failure: Some(e.to_string()),
                }
            }
        })
        .collect();
    let failures = samples.iter().filter(|s| s.metrics.is_none()).count();
    if failures > 0 && failures as f64 >= 0.01 * cfg.samples as f64 {
        return Err(Error::TooManyFailures {
            failed: failures,
            total: cfg.samples,
        });
    }
    let succeeded = cfg.samples - failures;
    let passing = samples.iter().filter(|s| s.passed).count();
    let mut study = NoiseStudy {
        config: cfg.clone(),
        band_ghz: band,
        samples,
        failures,
        yield_fraction: if succeeded > 0 {
            passing as f64 / succeeded as f64
        } else {
            0.0
        },
        quartiles: None,
    };
    study.quartiles = quartiles(&study.passing_er0());
    Ok(study)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scattering::Direction;
    use nalgebra::Matrix3;
    use proptest::prelude::*;

    fn spectrum(pairs: &[(f64, f64)]) -> SMatrixSpectrum {
        let omega = (0..pairs.len()).map(|k| k as f64).collect();
        let s = pairs
            .iter()
            .map(|&(fwd, back)| {
                let mut m = Matrix3::zeros();
                m[(1, 0)] = crate::C64::new(fwd, 0.0);
                m[(0, 1)] = crate::C64::new(back, 0.0);
                m
            })
            .collect();
        SMatrixSpectrum { omega, s }
    }

    #[test]
    fn ideal_circulator_hits_the_clamp() {
        let sm = spectrum(&[(1.0, 0.0), (0.9, 0.1)]);
        let m = er_il(&sm, [0, 1], [0.0, 1.0]).unwrap();
        assert_eq!(m.er0_db, -300.0);
        assert!(m.il0_db.abs() < 1e-12);
    }

    #[test]
    fn reciprocal_device_has_zero_extinction() {
        let sm = spectrum(&[(0.3, 0.3), (0.7, 0.7)]);
        let m = er_il(&sm, [0, 1], [0.0, 1.0]).unwrap();
        assert_eq!(m.er0_db, 0.0);
        assert!((m.il0_db - 20.0 * 0.7f64.log10()).abs() < 1e-12);
        assert!(er_il(&sm, [0, 1], [5.0, 6.0]).is_err());
    }

    #[test]
    fn extrema_are_taken_independently() {
        let sm = spectrum(&[(0.99, 0.01), (0.5, 0.5), (0.2, 0.1)]);
        let m = er_il(&sm, [0, 1], [0.0, 2.0]).unwrap();
        assert!((m.er0_db - 20.0 * (0.01f64 / 0.99).log10()).abs() < 1e-12);
        assert!((m.il0_db - 20.0 * 0.99f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn zero_sigma_leaves_params_unchanged() {
        let p = CircuitParams::default();
        let mut rng = sample_rng(7, 0);
        assert_eq!(sample_charge(&p, 0.0, &mut rng), p);
        assert_eq!(
            sample_flux(&p, 0.0, FluxConvention::PreProjection, &mut rng).unwrap(),
            p
        );
    }

    #[test]
    fn charge_draws_are_centered() {
        let p = CircuitParams::default();
        let sigma = 0.35;
        let mut rng = sample_rng(11, 3);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let q = sample_charge(&p, sigma, &mut rng);
            sum += q.ng[0] - p.ng[0];
        }
        assert!((sum / n as f64).abs() < 3.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn projected_flux_spread() {
        let p = CircuitParams::default();
        let n = 40_000;
        for (conv, expected) in [
            (FluxConvention::PreProjection, 0.05 * (2.0f64 / 3.0).sqrt()),
            (FluxConvention::PostProjection, 0.05),
        ] {
            let mut rng = sample_rng(5, 1);
            let mut sq = 0.0;
            for _ in 0..n {
                let q = sample_flux(&p, 0.05, conv, &mut rng).unwrap();
                let d = q.a_loops[0] / p.a_loops[0] - 1.0;
                sq += d * d;
            }
            let sd = (sq / n as f64).sqrt();
            assert!((sd - expected).abs() < 0.02 * expected, "{conv:?}: {sd} vs {expected}");
        }
    }

    #[test]
    fn flux_noise_needs_symmetric_baseline() {
        let p = CircuitParams {
            a_loops: [0.2, 0.3, 0.25],
            ..CircuitParams::default()
        };
        assert!(sample_flux(&p, 0.01, FluxConvention::PreProjection, &mut sample_rng(1, 0)).is_err());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let p = CircuitParams::default();
        let cfg = NoiseConfig::new(NoiseKind::Charge, 0.2, 4, 99);
        let a = draw_sample(&p, &cfg, 2).unwrap();
        let b = draw_sample(&p, &cfg, 2).unwrap();
        let c = draw_sample(&p, &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn quartiles_use_linear_interpolation() {
        let q = quartiles(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (1.75, 2.5, 3.25));
        let q = quartiles(&[5.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (5.0, 5.0, 5.0));
        assert!(quartiles(&[]).is_none());
    }

    #[test]
    fn config_validation() {
        let mut cfg = NoiseConfig::new(NoiseKind::Flux, 0.05, 10, 1);
        assert!(cfg.validate().is_ok());
        cfg.band_ghz = Some([3.0, 2.0]);
        assert!(cfg.validate().is_err());
        cfg.band_ghz = None;
        cfg.pair = [1, 1];
        assert!(cfg.validate().is_err());
        assert!(NoiseConfig::new(NoiseKind::Charge, -0.1, 10, 1).validate().is_err());
        assert!(NoiseConfig::new(NoiseKind::Charge, 0.1, 0, 1).validate().is_err());
    }

    #[test]
    fn noiseless_study_is_uniform() {
        let p = CircuitParams::default().with_n_max(2);
        let ext = ExternalParams {
            g_ghz: 1.6,
            kappa_ghz: 0.5,
            omega_r_ghz: 5.0,
            omega_t_ghz: 5.0,
            direction: Direction::Clockwise,
        };
        let mut cfg = NoiseConfig::new(NoiseKind::Charge, 0.0, 3, 4);
        cfg.step_ghz = 0.05;
        cfg.threshold_db = -200.0;
        let study = run_study(&p, &ext, &cfg).unwrap();
        assert_eq!(study.yield_fraction, 1.0);
        let first = study.samples[0].metrics;
        assert!(study.samples.iter().all(|s| s.metrics == first));
        let again = run_study(&p, &ext, &cfg).unwrap();
        assert_eq!(study, again);
    }

    proptest! {
        #[test]
        fn flux_samples_preserve_total_frustration(seed in any::<u64>(), index in 0u64..1000, sigma in 0.0f64..0.3) {
            let p = CircuitParams::default();
            let q = sample_flux(&p, sigma, FluxConvention::PreProjection, &mut sample_rng(seed, index)).unwrap();
            let total: f64 = q.a_loops.iter().sum();
            prop_assert!((total - 3.0 * p.a_loops[0]).abs() < 1e-14);
            prop_assert!(q.a_loops.iter().all(|&a| a > 0.0 && a < 1.0));
        }

        #[test]
        fn metrics_are_non_positive(pairs in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..20)) {
            let sm = spectrum(&pairs);
            let m = er_il(&sm, [0, 1], [0.0, pairs.len() as f64]).unwrap();
            prop_assert!(m.er0_db <= 0.0 && m.er0_db >= -300.0);
            prop_assert!(m.il0_db <= 0.0);
        }
    }
}
