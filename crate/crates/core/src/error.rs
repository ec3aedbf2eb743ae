use thiserror::Error;

/// Errors produced by the decomposition toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("matrix contains a non-finite entry")]
    NonFinite,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("map is not completely positive (minimum Choi eigenvalue {margin:.3e})")]
    NotCompletelyPositive { margin: f64 },

    #[error("map is not a *-map (Choi defect {defect:.3e})")]
    NotStarMap { defect: f64 },

    #[error("kernel condition fails: common kernel element mapped to norm {violation:.3e}")]
    KernelCondition { violation: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("certificate does not verify: {0}")]
    UnverifiedCertificate(String),

    #[error("iteration budget exhausted after {iterations} iterations")]
    Budget { iterations: usize },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
