use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or precondition was rejected before any work started.
    #[error("invalid parameter: {0}")]
    Invalid(String),

    /// A reachable rate exceeds the ceiling of the stream that drives it.
    #[error("envelope violation on {stream} stream {index}: rate {rate} exceeds envelope {envelope}")]
    Envelope {
        stream: &'static str,
        index: usize,
        rate: f64,
        envelope: f64,
    },

    /// A coupling precondition (pointwise rate or initial-state ordering) fails.
    #[error("coupling precondition violated: {0}")]
    Ordering(String),

    #[error("state space of {states} configurations exceeds the limit of {limit}")]
    StateSpaceTooLarge { states: u128, limit: usize },

    #[error("{0}")]
    Estimation(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
