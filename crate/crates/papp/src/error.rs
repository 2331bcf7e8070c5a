//! Crate-wide error type.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Matrix/vector dimensions do not line up for the requested operation.
    DimMismatch(String),
    /// A pivot fell below the singularity threshold during factorization.
    Singular { pivot: f64 },
    /// A matrix required to be Hermitian deviated beyond tolerance.
    NotHermitian { deviation: f64 },
    /// A precoder or matrix that must carry power was identically zero.
    ZeroMatrix,
    /// An argument violated a documented precondition.
    InvalidArg(String),
    /// File or directory I/O failed.
    Io(String),
    /// A config, dataset record, or checkpoint could not be parsed.
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::Singular { pivot } => {
                write!(
                    f,
                    "singular system: pivot magnitude {pivot:.3e} below threshold"
                )
            }
            Error::NotHermitian { deviation } => {
                write!(f, "matrix is not Hermitian: max deviation {deviation:.3e}")
            }
            Error::ZeroMatrix => write!(f, "zero matrix where nonzero power is required"),
            Error::InvalidArg(msg) => write!(f, "invalid argument: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
