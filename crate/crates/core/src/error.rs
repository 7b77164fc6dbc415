use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("ground nodes {0} and {1} are co-located")]
    CoincidentNodes(usize, usize),

    #[error("UAV altitude {uav_z} m is not above ground node elevation {ground_z} m")]
    UavBelowUser { uav_z: f64, ground_z: f64 },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("adjacency matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("k-means requested {k} clusters for {n} points")]
    TooManyClusters { k: usize, n: usize },

    #[error("cluster midpoints need at least two centers, got {0}")]
    TooFewCenters(usize),

    #[error("empty dataset shard")]
    EmptyShard,

    #[error(transparent)]
    Idx(#[from] crate::data::IdxError),

    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("failed to parse config {path}: {reason}")]
    ConfigParse { path: PathBuf, reason: String },

    #[error("duplicate seed {0} in sweep")]
    DuplicateSeed(u64),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable short name for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Geometry(_) | Error::CoincidentNodes(..) | Error::UavBelowUser { .. } => {
                "geometry"
            }
            Error::ShapeMismatch { .. } | Error::NotSymmetric(..) => "shape",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::TooManyClusters { .. } | Error::TooFewCenters(_) => "clustering",
            Error::EmptyShard | Error::InfeasiblePartition(_) => "partition",
            Error::Idx(_) => "dataset",
            Error::Config { .. } | Error::DuplicateSeed(_) => "config",
            Error::ConfigParse { .. } => "config_parse",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) | Error::Csv(_) => "io",
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
