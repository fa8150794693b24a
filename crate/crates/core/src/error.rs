use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Each variant maps to a stable numeric [`Error::code`], which the CLI
/// prints and the C bindings return.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rasters are not congruent: {0}")]
    Congruence(String),
    #[error("value outside its domain: {0}")]
    Domain(String),
    #[error("score undefined: {0}")]
    UndefinedScore(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("probability maps unavailable: {0}")]
    UnavailableFeatures(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("no rule passed the selection filters")]
    NoRule,
    #[error("unknown feature `{0}`")]
    Registry(String),
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{file}: dimension mismatch: {detail}")]
    DimensionMismatch { file: String, detail: String },
    #[error("{file}: invalid class value {value} at pixel (x={x}, y={y})")]
    InvalidClass {
        file: String,
        x: u32,
        y: u32,
        value: u8,
    },
    #[error("{file}: corrupt PRB1 raster: {detail}")]
    Prb1Corrupt { file: String, detail: String },
    #[error("{file}: invalid probabilities: {detail}")]
    InvalidProbabilities { file: String, detail: String },
    #[error("{file}: argmax of probability map disagrees with prediction at pixel (x={x}, y={y})")]
    ArgmaxMismatch { file: String, x: u32, y: u32 },
    #[error("{file}: unsupported image: {detail}")]
    ImageFormat { file: String, detail: String },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable numeric identifier for this error kind.
    pub fn code(&self) -> i32 {
        match self {
            Error::Congruence(_) => 10,
            Error::Domain(_) => 11,
            Error::UndefinedScore(_) => 12,
            Error::EmptyDataset => 13,
            Error::UndefinedCorrelation(_) => 14,
            Error::InsufficientData(_) => 15,
            Error::UnavailableFeatures(_) => 16,
            Error::DegenerateData(_) => 17,
            Error::NoRule => 18,
            Error::Registry(_) => 19,
            Error::MissingFile(_) => 30,
            Error::DimensionMismatch { .. } => 31,
            Error::InvalidClass { .. } => 32,
            Error::Prb1Corrupt { .. } => 33,
            Error::InvalidProbabilities { .. } => 34,
            Error::ArgmaxMismatch { .. } => 35,
            Error::ImageFormat { .. } => 36,
            Error::Manifest(_) => 37,
            Error::InvalidConfig(_) => 40,
            Error::Usage(_) => 41,
            Error::Json(_) => 50,
            Error::Io(_) => 51,
        }
    }

    /// Replaces the placeholder file name of raster validation errors.
    pub fn with_file(self, name: &str) -> Error {
        let name = name.to_string();
        match self {
            Error::InvalidClass { x, y, value, .. } => Error::InvalidClass {
                file: name,
                x,
                y,
                value,
            },
            Error::InvalidProbabilities { detail, .. } => Error::InvalidProbabilities { file: name, detail },
            Error::ArgmaxMismatch { x, y, .. } => Error::ArgmaxMismatch { file: name, x, y },
            Error::Congruence(detail) => Error::DimensionMismatch { file: name, detail },
            other => other,
        }
    }

    /// Process exit code: 2 for usage problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            _ => 1,
        }
    }
}
