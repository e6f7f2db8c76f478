use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sample times must be non-decreasing and within the horizon")]
    UnsortedSampleTimes,

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("block ({0}, {1}) does not fit inside the simulated domain")]
    BlockOutOfDomain(i64, i64),

    #[error("block ({z1}, {z2}) at level {k} violates the parity rule")]
    Parity { z1: i64, z2: i64, k: u32 },

    #[error("forward states are required for frozen-site checks but were not supplied")]
    MissingForwardStates,

    #[error("interior fixed point search did not converge")]
    NoConvergence,

    #[error("integration diverged at t = {0}")]
    Divergence(f64),

    #[error("event log line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
