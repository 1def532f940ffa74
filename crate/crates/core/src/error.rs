use crate::types::{ClusterId, PointId};

/// Errors raised by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Inputs are inconsistent with each other or with the model (for
    /// example two clusterings over different point universes).
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller-side precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("cluster {0} is a singleton and cannot be split")]
    SplitInfeasible(ClusterId),

    #[error("unknown cluster id {0}")]
    UnknownCluster(ClusterId),

    #[error("point {0} is not part of the universe")]
    UnknownPoint(PointId),

    #[error("cluster has {size} members, above the exhaustive-search cap of {cap}; sample the cluster first")]
    SizeCap { size: usize, cap: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
