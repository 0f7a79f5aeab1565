use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("map {index} is not surjective: rank {rank} < {rows}")]
    NotSurjective { index: usize, rank: usize, rows: usize },

    #[error("map {index} has {cols} columns, expected ambient dimension {dim}")]
    DimensionMismatch { index: usize, cols: usize, dim: usize },

    #[error("invalid datum: {0}")]
    InvalidDatum(String),

    #[error("parameter domain error at index {index}: {reason}")]
    ParameterDomain { index: usize, reason: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("ill-conditioned matrix (reciprocal condition {rcond:.3e})")]
    IllConditioned { rcond: f64 },

    #[error("pushforward image escapes the target box: escaping mass fraction {fraction:.3e}")]
    Coverage { fraction: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("quadrature too coarse: self-estimate {estimate:.3e} exceeds 10% of value {value:.3e}")]
    Resolution { estimate: f64, value: f64 },

    #[error("no index j with theta_j < c_j; the adjoint inequality is an identity here")]
    NoAdmissibleIndex,

    #[error("group too large: order {order} exceeds cap {cap}")]
    CapExceeded { order: usize, cap: usize },

    #[error("invalid homomorphism: {0}")]
    InvalidHom(String),

    #[error("exponents off the scaling line: {0}")]
    OffScalingLine(String),

    #[error("out of scope: {0}")]
    OutOfScope(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("zero mass")]
    ZeroMass,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("scenario error in task {task}: {message}")]
    Scenario { task: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
