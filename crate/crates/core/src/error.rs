use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("expectation method {method} is not applicable to measure {measure}")]
    MethodMismatch { method: String, measure: String },

    #[error("manifold evaluation failed at x = {x:?}: {reason}")]
    Manifold { x: Vec<f64>, reason: String },

    #[error("state {state:?} is not in the {set} set")]
    NotInSet { set: &'static str, state: Vec<f64> },

    #[error("non-finite state after t = {t}; last finite state {last:?}")]
    NonFinite { t: f64, last: Vec<f64> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("division by zero in {0}")]
    DivisionByZero(&'static str),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is singular")]
    Singular,

    #[error("LMI precondition violated for mode {mode}: {reason}")]
    Infeasible { mode: usize, reason: String },

    #[error("scenario self-check failed: {0}")]
    SelfCheck(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
