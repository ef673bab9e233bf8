use thiserror::Error;

/// Errors raised by the platoon library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("configuration error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("terminal synthesis failed: {0}")]
    Synthesis(String),

    #[error("ill-formed optimization problem: {0}")]
    Specification(String),

    #[error("solver failed to converge at step {step}, vehicle {vehicle}: {reason}")]
    SolverFailure {
        step: usize,
        vehicle: usize,
        reason: String,
    },

    #[error("no feasible candidate: shift of {shift} steps exceeds packet length {len}")]
    CandidateUnavailable { shift: usize, len: usize },

    #[error("empty trace")]
    EmptyTrace,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}
