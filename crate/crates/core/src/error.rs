//! Crate-wide error type.
//!
//! Pathwise verification failures (order violations, slice mismatches) are
//! *not* errors: they are structured outcomes carried by the reports in
//! [`crate::coupling`]. `Error` covers misuse, bad parameters and broken
//! internal invariants.

use std::fmt;

/// Errors produced by geometry builders, dynamics drivers and experiment
/// runners.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A constructor argument is outside its documented domain.
    InvalidParameter(String),
    /// An operation received inputs that violate its preconditions.
    InvalidInput(String),
    /// An engine/run-mode combination that is not allowed
    /// (e.g. the rejection-free engine inside a coupled run).
    InvalidMode(String),
    /// Not enough samples to produce the requested estimate.
    InsufficientData(String),
    /// An internal geometric invariant failed; signals a construction bug.
    Geometry(String),
    /// A runtime invariant failed (rate-table audit, count caches); signals
    /// an engine bug.
    Internal(String),
    /// Configuration file could not be parsed.
    Config(String),
    /// Underlying I/O failure while persisting or loading results.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(m) => write!(f, "invalid parameter: {m}"),
            Error::InvalidInput(m) => write!(f, "invalid input: {m}"),
            Error::InvalidMode(m) => write!(f, "invalid mode: {m}"),
            Error::InsufficientData(m) => write!(f, "insufficient data: {m}"),
            Error::Geometry(m) => write!(f, "internal geometry error: {m}"),
            Error::Internal(m) => write!(f, "internal invariant violation: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
