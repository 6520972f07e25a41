use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("certificate verification failed: {0}")]
    Certificate(String),

    #[error(transparent)]
    Core(#[from] specnorm::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub const EXIT_INVALID: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CERTIFICATE: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use specnorm::Error as E;
        match self {
            CliError::Input(_) | CliError::Read { .. } => EXIT_INVALID,
            CliError::Write { .. } => 1,
            CliError::Certificate(_) => EXIT_CERTIFICATE,
            CliError::Core(e) => match e {
                E::InvalidInput(_) | E::DegenerateInput(_) | E::Unsupported(_) => EXIT_INVALID,
                E::Solver { .. } | E::Numerical(_) => EXIT_SOLVER,
                E::CertificateNotFound(_) => EXIT_CERTIFICATE,
                E::Io(_) => 1,
            },
        }
    }
}
