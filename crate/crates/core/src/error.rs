use std::path::PathBuf;

use thiserror::Error;

use crate::trajectory::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("exact gradients are not available for this oracle")]
    MissingExactGradient,

    #[error("run diverged at cycle {} step {}: {}", .0.t, .0.k, .0.reason)]
    Diverged(Box<Divergence>),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A run that was aborted by the divergence guard, with everything recorded
/// up to the failing step.
#[derive(Debug)]
pub struct Divergence {
    pub t: usize,
    pub k: usize,
    pub reason: String,
    pub partial: Trajectory,
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
