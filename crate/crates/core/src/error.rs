use std::path::PathBuf;

use crate::cloud::CloudPoint;

/// Crate-wide error type. Module-level failures are grouped by the stage
/// that raises them so callers can match on what went wrong.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("slab of {slices} slice(s) from index {origin} exceeds axis length {len}")]
    SlabOutOfBounds { origin: usize, slices: usize, len: usize },

    #[error("candidate mask has no positive voxels")]
    EmptyMask,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("rejection budget of {draws} draws exhausted with {} of {requested} points accepted", partial.len())]
    DrawBudgetExhausted {
        partial: Vec<CloudPoint>,
        requested: usize,
        draws: usize,
    },

    #[error("point cloud has no mask points")]
    NoMaskPoints,

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("scale factor {factor} is not positive after {attempts} draws")]
    DegenerateScale { factor: f64, attempts: usize },

    #[error("dataset contains a single class")]
    SingleClassDataset,

    #[error("edge convolution needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no ground-truth nodules to score against")]
    NoTruths,

    #[error("could not place {what} after {attempts} attempts")]
    PlacementFailure { what: String, attempts: usize },

    #[error("need at least {needed} scans, got {got}")]
    TooFewScans { needed: usize, got: usize },

    #[error("malformed {kind} file {}: {reason}", path.display())]
    Malformed {
        kind: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("malformed point cloud file: {0}")]
    MalformedCloudFile(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidVolume(_) => "InvalidVolume",
            Error::SlabOutOfBounds { .. } => "SlabOutOfBounds",
            Error::EmptyMask => "EmptyMask",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::DrawBudgetExhausted { .. } => "DrawBudgetExhausted",
            Error::NoMaskPoints => "NoMaskPoints",
            Error::EmptyCloud => "EmptyCloud",
            Error::DegenerateScale { .. } => "DegenerateScale",
            Error::SingleClassDataset => "SingleClassDataset",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NoTruths => "NoTruths",
            Error::PlacementFailure { .. } => "PlacementFailure",
            Error::TooFewScans { .. } => "TooFewScans",
            Error::Malformed { .. } => "Malformed",
            Error::MalformedCloudFile(_) => "MalformedCloudFile",
            Error::Io { .. } => "Io",
            Error::Json(_) => "Json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
