use thiserror::Error;

use crate::pim::ViolationReport;

/// Every failure the simulator can report.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter set or configuration document that breaks an invariant.
    #[error("config error: {0}")]
    Config(String),

    /// The layer cannot be placed on the substrate.
    #[error("mapping error: {0}")]
    Mapping(String),

    /// Products for different output elements would share one wavelength sum.
    #[error("interference violation: {0}")]
    Interference(ViolationReport),

    /// A memory access hit a subarray row that is currently running PIM.
    #[error("conflict: bank {bank} subarray row {subarray_row} is PIM-active")]
    Conflict { bank: usize, subarray_row: usize },

    /// Adjacent layers whose shapes do not chain.
    #[error("shape error between layers {from} -> {to}: {detail}")]
    Shape { from: String, to: String, detail: String },

    #[error("unknown layer kind `{0}`")]
    UnknownLayerKind(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn mapping(msg: impl Into<String>) -> Self {
        Error::Mapping(msg.into())
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
