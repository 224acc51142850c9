use thiserror::Error;

/// Unified error type for the whole engine.
///
/// Variants map onto the process exit codes used by the CLI:
/// `Config` is a usage error, `Numerical` is a numerical failure, and the
/// remaining variants are data or protocol problems.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: shape mismatches, duplicate ids, non-finite entries.
    #[error("validation: {0}")]
    Validation(String),
    /// Inconsistent or out-of-range configuration (k = 0, epsilon <= 0, ...).
    #[error("invalid-configuration: {0}")]
    Config(String),
    /// A numerical routine failed to converge or produced a non-finite value.
    #[error("numerical-failure: {0}")]
    Numerical(String),
    /// The missing-data protocol would be violated (coverage loss, m = 1 with
    /// r > 0, ratio outside [0, 0.5]).
    #[error("protocol: {0}")]
    Protocol(String),
    /// Synthetic generation could not satisfy the requested geometry.
    #[error("generation: {0}")]
    Generation(String),
}

impl Error {
    /// Stable machine-readable tag for diagnostics and CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Config(_) => "invalid-configuration",
            Error::Numerical(_) => "numerical-failure",
            Error::Protocol(_) => "protocol",
            Error::Generation(_) => "generation",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
