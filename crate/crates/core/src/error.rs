use std::io;

use thiserror::Error;

/// Errors produced by the forest library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("dataset has no rows")]
    Empty,

    #[error("size error: {0}")]
    Size(String),

    #[error("impurity of an empty node is undefined")]
    EmptyNode,

    #[error("class totals are inconsistent: parent {parent}, children {left} + {right}")]
    Mismatch { parent: u64, left: u64, right: u64 },

    #[error("split leaves an empty child")]
    EmptyChild,

    #[error("no choices to sample from")]
    NoChoices,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("too few non-zero paired differences ({0}, need at least 6)")]
    TooFewPairs(usize),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::NoChoices | Error::TooFewPairs(_) => ErrorClass::Config,
            Error::Io(_) => ErrorClass::Io,
            Error::Parse { .. }
            | Error::Schema(_)
            | Error::Empty
            | Error::Size(_)
            | Error::EmptyNode
            | Error::Mismatch { .. }
            | Error::EmptyChild
            | Error::Json(_) => ErrorClass::Data,
        }
    }
}
