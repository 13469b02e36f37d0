use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },

    #[error("timestep {t} out of range 1..={steps}")]
    TimestepOutOfRange { t: usize, steps: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid tiling: {0}")]
    Tiling(String),

    #[error("window at offset {offset} (width {width}) exceeds panorama width {pano_width}")]
    OutOfBounds {
        offset: usize,
        width: usize,
        pano_width: usize,
    },

    #[error("invalid fusion input: {0}")]
    Fusion(String),

    #[error("cell ({row}, {col}) has zero total weight")]
    ZeroWeight { row: usize, col: usize },

    #[error("denoiser: {0}")]
    Denoiser(String),

    #[error("denoiser failed on crop {crop} at timestep {t}: {source}")]
    DenoiserCall {
        crop: usize,
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("external denoiser: {0}")]
    External(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

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
