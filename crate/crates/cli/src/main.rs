//! `vortex-sim`: spectra, phase scans, S-matrix spectra, vortex traces and
//! noise studies for the three-island vortex circulator.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 config error, 3 numeric failure,
//! 4 no target at the requested index.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Artifact, CommandError, CommandResult};
use config::RunConfig;

const THREADS_ENV: &str = "VORTEX_SIM_THREADS";
const DEFAULT_OUT: &str = "out";

#[derive(Parser)]
#[command(name = "vortex-sim", version, about = "Vortex circulator simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// JSON run configuration; omitted blocks and keys take default values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`; default `out`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for the noise draws (overrides `noise.seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Lowest energy levels over the flux sweep: spectrum.csv, crossings.json.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Phase difference scan and target frequencies: phase.csv, targets.json.
    Phase {
        #[command(flatten)]
        common: Common,
    },
    /// S-matrix around one tuned target: smatrix.csv, bandwidth.json.
    Smatrix {
        #[command(flatten)]
        common: Common,
        /// 1-based target index (overrides `smatrix.target`).
        #[arg(long)]
        target: Option<usize>,
    },
    /// Loop currents, circulation numbers and time traces: vortex_*.csv.
    Vortex {
        #[command(flatten)]
        common: Common,
    },
    /// Charge or flux disorder study: noise_samples.csv, noise_summary.json.
    Noise {
        #[command(flatten)]
        common: Common,
        /// 1-based target index used for tuning (overrides `smatrix.target`).
        #[arg(long)]
        target: Option<usize>,
        /// Noise strength (overrides `noise.sigma`).
        #[arg(long)]
        sigma: Option<f64>,
        /// Number of samples (overrides `noise.samples`).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Truncation check n_max -> n_max + 1: convergence.json.
    Convergence {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Spectrum { common }
            | Command::Phase { common }
            | Command::Smatrix { common, .. }
            | Command::Vortex { common }
            | Command::Noise { common, .. }
            | Command::Convergence { common } => common,
        }
    }
}

fn load_config(cmd: &Command) -> Result<RunConfig, config::ConfigError> {
    let common = cmd.common();
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    if let Some(seed) = common.seed {
        cfg.noise.seed = seed;
    }
    match cmd {
        Command::Smatrix { target: Some(t), .. } => cfg.smatrix.target = *t,
        Command::Noise {
            target, sigma, samples, ..
        } => {
            if let Some(t) = target {
                cfg.smatrix.target = *t;
            }
            if let Some(s) = sigma {
                cfg.noise.sigma = *s;
            }
            if let Some(n) = samples {
                cfg.noise.samples = *n;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("cannot size thread pool: {e}"))
}

fn run(cmd: &Command, cfg: &RunConfig) -> CommandResult<Vec<Artifact>> {
    match cmd {
        Command::Spectrum { .. } => commands::spectrum(cfg),
        Command::Phase { .. } => commands::phase(cfg),
        Command::Smatrix { .. } => commands::smatrix(cfg),
        Command::Vortex { .. } => commands::vortex(cfg),
        Command::Noise { .. } => commands::noise(cfg),
        Command::Convergence { .. } => commands::convergence(cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let cfg = match load_config(&cli.command) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    let result = run(&cli.command, &cfg).and_then(|artifacts| commands::write_artifacts(&out, &artifacts));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CommandError::Io { .. } => 1,
                CommandError::Config(_) => 2,
                CommandError::Numeric(_) => 3,
                CommandError::NoTargets(_) => 4,
            })
        }
    }
}
