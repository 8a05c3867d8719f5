use alloc::string::String;

use thiserror::Error;

/// Errors produced by the algorithmic core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    Domain(String),
    #[error("signal {0} has zero prior mass")]
    UnreachableSignal(usize),
    #[error("user {0:?} already exists")]
    UserExists(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
