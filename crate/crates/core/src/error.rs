use thiserror::Error;

/// Errors produced anywhere in the bracket / flow / steering pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("letter-sequence convention violated: {0}")]
    Convention(String),

    #[error("unknown variable x{index} (field dimension is {dim})")]
    UnknownVariable { index: usize, dim: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown system '{0}'")]
    UnknownSystem(String),

    #[error("invalid sub-bracket path")]
    InvalidPath,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("all samples at the finest scale were discarded")]
    InsufficientSamples,

    #[error("flow step limit exceeded ({0} steps)")]
    StepLimitExceeded(u64),

    #[error("non-finite state encountered during integration")]
    NonFiniteState,

    #[error("{ell} bracket values cannot span R^{dim}")]
    Arity { ell: usize, dim: usize },

    #[error("steering did not converge (best residual {residual:e})")]
    NoConvergence { residual: f64 },

    #[error("no bracket-generating certificate available")]
    CertificateMissing,

    #[error("only {converged}/{total} targets converged at radius {radius:e}")]
    TooFewConverged { radius: f64, converged: usize, total: usize },

    #[error("uniqueness of solutions not guaranteed: {0}")]
    UniquenessHypothesis(String),
}

pub type Result<T> = std::result::Result<T, Error>;
