//! Crate-wide error type.
//!
//! Variants are grouped by how a front end should react: `Validation` for
//! malformed input or out-of-range parameters, `Physics` for preconditions
//! that fail on physical grounds (e.g. a refused blockade condition), and
//! `NotFound` for database lookups.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a structural or range check.
    #[error("validation: {0}")]
    Validation(String),

    /// A physical precondition is not met; carries enough context to report
    /// the refusal (e.g. blockade margins).
    #[error("physics precondition failed: {0}")]
    Physics(String),

    /// Lookup into the embedded ion database failed.
    #[error("not found: {0}")]
    NotFound(String),

    /// Embedded or external data could not be parsed.
    #[error("data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn physics(msg: impl Into<String>) -> Self {
        Error::Physics(msg.into())
    }

    pub fn not_found(msg: impl Into<String>) -> Self {
        Error::NotFound(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Suggested process exit code for batch front ends.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Physics(_) => 3,
            _ => 2,
        }
    }
}
