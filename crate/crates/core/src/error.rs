use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sequence: no frame contains any point")]
    EmptySequence,

    #[error("point {point} of frame {frame} lies outside the bounding box")]
    PointOutsideBox { frame: usize, point: usize },

    #[error("frame {frame} is empty")]
    EmptyFrame { frame: usize },

    #[error("resolution mismatch: {left:?} vs {right:?}")]
    ResolutionMismatch { left: [usize; 3], right: [usize; 3] },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate 6D rotation")]
    Degenerate6D,

    #[error("not a tree: {0}")]
    NotATree(String),

    #[error("graph is disconnected")]
    Disconnected,

    #[error("rank inversion at node {0}")]
    RankInversion(usize),

    #[error("topology mismatch at joint {index}: source parent {source_parent}, target parent {target_parent}")]
    TopologyMismatch {
        index: usize,
        source_parent: usize,
        target_parent: usize,
    },

    #[error("every keypoint is below the intensity threshold")]
    AllInvalid,

    #[error("weight row {row} sums to {sum}, expected 1")]
    WeightsNotNormalized { row: usize, sum: f64 },

    #[error("empty point set")]
    EmptyPointSet,

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Wraps an error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
