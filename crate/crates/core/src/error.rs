use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("eigensolver failed for dimension {dim}: {reason}")]
    EigenSolver { dim: usize, reason: String },

    #[error("levels {m} and {n} are degenerate (gap {gap:.3e} GHz)")]
    Degenerate { m: usize, n: usize, gap: f64 },

    #[error("phase steps {steps:?} do not quantize to {{0, ±2π/3}} (residual {residual:.3e} rad)")]
    NotQuantized { steps: [f64; 3], residual: f64 },

    #[error("phase steps {steps:?} classify inconsistently across loops")]
    InconsistentCirculation { steps: [f64; 3] },

    #[error("ω = {omega} GHz lies within {guard:.1e} GHz of transition {level} at {pole} GHz")]
    PoleProximity {
        omega: f64,
        level: usize,
        pole: f64,
        guard: f64,
    },

    #[error("frequency grid too coarse near ω = {omega} GHz (phase step {step:.3} rad); refine the grid")]
    Undersampled { omega: f64, step: f64 },

    #[error("susceptibility is ill-conditioned at ω = {omega} GHz (condition {condition:.3e})")]
    IllConditioned { omega: f64, condition: f64 },

    #[error("{failed} of {total} noise samples failed, above the 1% allowance")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
