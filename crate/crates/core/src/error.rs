use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("unknown model `{0}` (expected one of mean_field_ou, granular_media_1d, curie_weiss, custom)")]
    UnknownModel(String),

    #[error("model `{model}` requires parameter `{param}`")]
    MissingParameter { model: String, param: String },

    #[error("sample sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("assignment size {n} exceeds cap {cap}")]
    CapExceeded { n: usize, cap: usize },

    #[error("exact assignment requires uniform weights")]
    NonUniformWeights,

    #[error("sinkhorn did not converge within {iterations} iterations (marginal residual {residual:e})")]
    SinkhornNonConvergence { iterations: usize, residual: f64 },

    #[error("covariance is not positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),

    #[error("covariance is singular")]
    SingularCovariance,

    #[error("non-finite state at step {step}, particle {particle}")]
    NonFiniteState { step: usize, particle: usize },

    #[error(
        "p-th moment {moment:e} exceeded explosion bound {bound:e} at step {step}; frozen dynamics look non-ergodic"
    )]
    Divergence { step: usize, moment: f64, bound: f64 },

    #[error("density is not normalizable on the grid: {0}")]
    NonNormalizable(String),

    #[error(
        "diffusion varies in x by {max_deviation:e} on the grid; the 1-D density oracle needs constant-in-x diffusion"
    )]
    NonConstantDiffusion { max_deviation: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("negative radicand {0} in K(m, p)")]
    NegativeRadicand(f64),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("malformed measure file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
}
