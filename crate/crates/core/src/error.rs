use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the integrator library and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix dimension must be at least 1")]
    EmptyMatrix,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is singular")]
    Singular,

    #[error("index {index} out of range for {len} stages")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid tableau: {0}")]
    InvalidTableau(String),

    #[error("order conditions are only available for p in 1..=4, got {0}")]
    UnsupportedOrder(u32),

    #[error("invalid symplectic structure: {0}")]
    InvalidStructure(String),

    #[error("invalid step: {0}")]
    InvalidStep(String),

    #[error("stage iteration did not converge after {iterations} iterations (last defect {defect:e})")]
    NonConvergence { iterations: usize, defect: f64 },

    #[error("step {step} failed")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid problem parameters: {0}")]
    InvalidParams(String),

    #[error("no reference solution available for `{0}`; use a numeric reference")]
    ReferenceUnavailable(String),

    #[error("numeric reference untrusted: tiers disagree by {disagreement:e}")]
    ReferenceUntrusted { disagreement: f64 },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
