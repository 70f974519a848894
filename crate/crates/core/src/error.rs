use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },

    /// Exhaustive enumeration or exact arithmetic would exceed the configured caps.
    #[error("bounded mode required: {0}")]
    BoundedMode(String),

    #[error("bounded mode: evaluation undefined, bounds only ({0})")]
    EvaluationUndefined(String),

    /// `r_n` for this position cannot be evaluated exactly.
    #[error("sequence position {n} is not accessible in exact mode")]
    Inaccessible { n: String },

    #[error("matrix is rank deficient (smallest singular value {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },

    #[error("no admissible level below {limit}: condition {condition} binds ({detail})")]
    NoAdmissibleLevel {
        condition: u8,
        limit: String,
        detail: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid family: {0}")]
    InvalidFamily(String),
}
