use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed metadata in {path}: {message}")]
    Metadata { path: PathBuf, message: String },

    #[error("slice count mismatch: metadata declares {expected} slices, found {found}")]
    SliceCountMismatch { expected: usize, found: usize },

    #[error("raster size mismatch in {path}: expected {expected} bytes, found {found}")]
    RasterSize {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("dates must be strictly increasing and unique: {0}")]
    Dates(String),

    #[error("invalid pixel value {value} at {context}")]
    InvalidValue { value: f64, context: String },

    #[error("location ({row}, {col}) outside {height}x{width} extent")]
    OutOfBounds {
        row: i64,
        col: i64,
        height: usize,
        width: usize,
    },

    #[error("unknown band {0:?}")]
    UnknownBand(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("expected {expected} data, found {found}")]
    UnitDomain {
        expected: &'static str,
        found: &'static str,
    },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("sample size {n} outside supported range {min}..={max}")]
    SampleSize { n: usize, min: usize, max: usize },

    #[error("sample set {path}: line {line}: {message}")]
    SampleSet {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("alert at unknown location ({row}, {col})")]
    UnknownLocation { row: usize, col: usize },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
