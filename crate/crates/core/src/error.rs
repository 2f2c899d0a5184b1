use std::path::PathBuf;

use thiserror::Error;

use crate::harness::wire::CodecError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which planner constraint ruled out every candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Cloud-side bit extraction error bound.
    CloudBer,
    /// Attacker-side extraction error bound.
    AttackerBer,
    /// Cloud BER and attacker BER are each satisfiable, but never by the same `(beta, n)`.
    Joint,
    /// Detection delay leaves no room for a single bit per window.
    Delay,
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Constraint::CloudBer => "cloud bit-error bound",
            Constraint::AttackerBer => "attacker bit-error bound",
            Constraint::Joint => "cloud and attacker bounds jointly",
            Constraint::Delay => "detection delay",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("infeasible parameters: no candidate satisfies the {0}")]
    Infeasible(Constraint),

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error(transparent)]
    Codec(#[from] CodecError),

    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
