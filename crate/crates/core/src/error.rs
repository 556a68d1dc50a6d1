use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("qubit index {index} out of range for a {num_qubits}-qubit register")]
    QubitOutOfRange { index: usize, num_qubits: usize },

    #[error("{what}: expected length {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("shot count must be at least 1")]
    NoShots,

    #[error("shot record is empty")]
    EmptyRecord,

    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),

    #[error("gradient tape does not belong to the current network parameters")]
    StaleTape,

    #[error("network topologies differ: {0}")]
    TopologyMismatch(String),

    #[error("batch is empty")]
    EmptyBatch,

    #[error("surrogate has not been fitted yet")]
    MissingSurrogate,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            actual,
        }
    }
}
