use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate range zero: point coincides with the agent position")]
    DegenerateRange,

    #[error("non-finite angle: {0}")]
    NonFiniteAngle(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("rotation of {0} degrees is not a multiple of the azimuth resolution {1}")]
    RotationNotOnGrid(f64, f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("map generation failed: {0}")]
    Generation(String),

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("episode already terminated")]
    EpisodeDone,

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
