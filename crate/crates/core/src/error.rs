use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too coarse: n = {n}, need at least {min}")]
    GridTooCoarse { n: usize, min: usize },

    #[error("size mismatch: expected {expected} values, got {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("derivative requires centered perturbation (mass = {mass:e})")]
    NotCentered { mass: f64 },

    #[error("kernel is not positive semidefinite: Fourier mode {mode} has coefficient {coefficient:e}")]
    KernelNotMonotone { mode: usize, coefficient: f64 },

    #[error("kernel is not even at node {index}")]
    KernelNotEven { index: usize },

    #[error("unknown preset model {0:?}")]
    UnknownPreset(String),

    #[error("node index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("truncated horizon is tail sensitive: doubling it moved u(0) by {change:e}")]
    TailSensitive { change: f64 },

    #[error("Cauchy criterion not met (last gap {gap:e})")]
    CauchyFailure { gap: f64 },

    #[error("mass drift {drift:e} in Fokker-Planck step {step}")]
    MassDrift { step: usize, drift: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rate fit: {0}")]
    Fit(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
