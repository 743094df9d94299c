use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid device {id}: {reason}")]
    InvalidDevice { id: usize, reason: String },

    #[error("fleet must contain at least one device")]
    EmptyFleet,

    #[error("length mismatch: fleet has {expected} devices, state has {found} entries")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid reference signal: {0}")]
    InvalidSignal(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported input: {0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
