//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// An intermediate value left the 8-bit range the evaluation layer
    /// permits. This signals an illegal circuit, never a data error.
    #[error("guard violation in `{gadget}`: intermediate value {value} outside [0, 255]")]
    GuardViolation { gadget: &'static str, value: i64 },

    /// A lookup received an input outside the table's declared domain.
    #[error("domain error in `{gadget}`: lookup input {value} outside [0, {domain_max}]")]
    DomainError {
        gadget: &'static str,
        value: i64,
        domain_max: u32,
    },

    /// No catalog base of the requested width can hold the required range.
    #[error("no {width}-bit catalog base provides {required_bits:.2} bits (largest holds {max_bits:.2})")]
    CapacityError {
        required_bits: f64,
        width: u8,
        max_bits: f64,
    },

    /// A value cannot be represented in the requested encoding.
    #[error("value {value} not representable: {reason}")]
    RangeError { value: i64, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeError(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("invalid configuration: {0}")]
    ConfigError(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
