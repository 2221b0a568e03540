use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lens axis {axis} out of range for {dim}-dimensional points")]
    InvalidLensAxis { axis: usize, dim: usize },
    #[error("lens must have 1 or 2 components, got {0}")]
    InvalidLensDimension(usize),
    #[error("degenerate lens: {0}")]
    DegenerateLens(String),
    #[error("lens has {lens} rows but the point cloud has {points}")]
    LensSizeMismatch { lens: usize, points: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("points have inconsistent dimension: row {row} has {found}, expected {expected}")]
    RaggedPoints { row: usize, found: usize, expected: usize },
    #[error("overlap {0} outside [0, 1)")]
    InvalidOverlap(f64),
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),
    #[error("brick covers need a 2-dimensional lens, got {0}")]
    BrickCoverDimension(usize),
    #[error("operation not supported for {0} covers")]
    UnsupportedScheme(&'static str),
    #[error("unknown bin {0}")]
    UnknownBin(usize),
    #[error("lens point {point} is not covered by any bin")]
    CoverageError { point: usize },
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("invalid cluster parameters: {0}")]
    InvalidClusterParams(String),
    #[error("invalid tower configuration: {0}")]
    InvalidTower(String),
    #[error("tower containment violated at level {level}, bin {bin}")]
    TowerContainment { level: usize, bin: usize },
    #[error("unknown fixture {0:?}")]
    UnknownFixture(String),
    #[error("corrupt session: {0}")]
    CorruptSession(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the environment rather than bad input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::CorruptSession(_))
    }
}
