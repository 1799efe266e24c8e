use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate triple: {0}")]
    DegenerateTriple(&'static str),

    #[error(
        "point triple lies outside the neighborhood radius (mean distance {mean} >= {radius})"
    )]
    OutOfNeighborhood { mean: f64, radius: f64 },

    #[error("mesh is not watertight: {0}")]
    NotWatertight(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid scan: {0}")]
    InvalidScan(String),

    #[error("no surface of the scene is visible from the sensor")]
    EmptyView,

    #[error("shape class {0} has no training samples")]
    EmptyClass(u32),

    #[error("unknown shape class {0}")]
    UnknownClass(u32),

    #[error("unknown object class {0}")]
    UnknownObject(u32),

    #[error("insufficient support: {found} points within radius, need at least {needed}")]
    InsufficientSupport { found: usize, needed: usize },

    #[error("degenerate quadric fit (rank-deficient normal equations)")]
    DegenerateFit,

    #[error("unknown hash entry")]
    UnknownEntry,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
