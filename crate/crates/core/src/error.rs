use thiserror::Error;

use crate::params::Variant;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient history at t={t}: at least {required} prior observations are needed")]
    InsufficientHistory { t: usize, required: usize },

    #[error("invalid trade event at position {position}: {reason}")]
    InvalidEvent { position: usize, reason: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation `{op}` is not defined for variant {variant}")]
    UnsupportedVariant { op: &'static str, variant: Variant },

    #[error("trade probability saturated at t={t} ({count} of {n_obs} observations clamped)")]
    ProbabilitySaturated { t: usize, count: usize, n_obs: usize },

    #[error("probability at exactly 0 or 1 at position {position}")]
    DegenerateProbability { position: usize },

    #[error("balanced window ending at t={t}: net trade sign is zero")]
    BalancedWindow { t: usize },

    #[error("return persistence too close to unity: 1 - sum(a) = {denominator:e}")]
    NearUnitPersistence { denominator: f64 },

    #[error("every initialization candidate produced a non-finite likelihood")]
    AllCandidatesInvalid,

    #[error("non-finite log-likelihood at the starting point")]
    NonFiniteStart,

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("singular or ill-conditioned system: {0}")]
    Singular(String),

    #[error("shock stream is already antithetic")]
    AlreadyMirrored,

    #[error("unknown scenario kind `{0}`")]
    UnknownScenario(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
