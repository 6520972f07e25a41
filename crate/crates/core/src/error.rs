use thiserror::Error;

use crate::sdp::SdpStatus;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The input is well formed but the requested object is undefined for it
    /// (for example the maximal singular subspace of the zero matrix).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("solver did not converge: {status:?} after {iterations} iterations ({detail})")]
    Solver {
        status: SdpStatus,
        iterations: usize,
        detail: String,
    },

    #[error("certificate not found: {0}")]
    CertificateNotFound(String),

    #[error("internal numerical error: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
