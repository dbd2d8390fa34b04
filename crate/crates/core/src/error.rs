use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not a rotation (orthogonality defect {defect:.3e})")]
    NotARotation { defect: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("matrix is rank deficient; nearest rotation is not unique")]
    RankDeficient,

    #[error("camera multiplex is empty")]
    EmptyMultiplex,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("face index {index} out of range at line {line}")]
    IndexOutOfRange { line: usize, index: i64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("bad keypoint count {count}: expected 3..={max}")]
    BadCount { count: usize, max: usize },

    #[error("vertex {0} has no neighbours")]
    IsolatedVertex(usize),

    #[error("cannot place {count} colours with separation > {separation}")]
    Infeasible { count: usize, separation: f64 },

    #[error("mesh has no faces")]
    EmptyMesh,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate correspondences: {0}")]
    Degenerate(&'static str),

    #[error("no consensus: best hypothesis has {inliers} inliers, need {required}")]
    NoConsensus { inliers: usize, required: usize },

    #[error("ground-truth mask has no foreground pixels")]
    EmptyForeground,

    #[error("camera weights invalid: {0}")]
    WeightMismatch(String),

    #[error("per-frame sequence is empty")]
    EmptySequence,

    #[error("target mask is empty")]
    EmptyTarget,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
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

    /// True for errors caused by reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Json { .. } | Error::Format { .. } | Error::Parse { .. }
        )
    }
}
