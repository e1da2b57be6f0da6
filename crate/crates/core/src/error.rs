use thiserror::Error;

/// Errors produced by the analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unsupported scale: {what} (limit {limit}, got {got})")]
    UnsupportedScale {
        what: &'static str,
        limit: usize,
        got: usize,
    },

    /// An input violated a structural invariant (e.g. a non-monotone CCDF).
    #[error("contract violation: {0}")]
    Contract(String),

    /// No positive symmetric solution for D. Carries the nullspace basis
    /// (rows are basis vectors over the upper-triangular unknowns).
    #[error("could not construct D: {reason}")]
    Construction {
        reason: String,
        nullspace: Vec<Vec<f64>>,
    },

    #[error("coupling bound undefined: energy gap is {delta_e}")]
    UndefinedBound { delta_e: f64 },

    #[error("deadline exceeded")]
    Timeout,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn arg(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
