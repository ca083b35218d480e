use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("distribution needs at least one weight")]
    EmptyDistribution,
    #[error("invalid weight {value} at index {index}: weights must be finite and non-negative")]
    InvalidWeight { index: usize, value: f64 },
    #[error("distribution floor must be positive and finite, got {0}")]
    InvalidFloor(f64),
    #[error("sample {0} outside [0, 1)")]
    SampleOutOfRange(f64),
    #[error("index {index} out of range for {len} elements")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("direction lies below the horizon of the frame")]
    BelowHorizon,
    #[error("scene has no primitives")]
    EmptyScene,
    #[error("scene has zero surface area")]
    ZeroArea,
    #[error("degenerate primitive #{index}: {reason}")]
    DegeneratePrimitive { index: usize, reason: String },
    #[error("primitive #{index} references unknown material `{name}`")]
    UnknownMaterial { index: usize, name: String },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value rejected: {0}")]
    NonFinite(&'static str),
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("malformed image file: {0}")]
    MalformedImage(String),
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
