use thiserror::Error;

/// Crate-wide error type.
///
/// The variants map onto the stable CLI exit codes: configuration problems
/// exit with 2, numerical divergence with 3, geometry failures with 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("inconsistent input: {0}")]
    Inconsistency(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) | Error::Inconsistency(_) => 2,
            Error::Divergence(_) => 3,
            Error::Geometry(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
