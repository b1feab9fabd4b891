use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("unsupported image format in {path}: {format}")]
    UnsupportedFormat { path: PathBuf, format: String },
    #[error("invalid image dimensions {width}x{height}x{channels}")]
    InvalidDimensions {
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("expected {expected} channels, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("domain mismatch: {0}x{1} vs {2}x{3}")]
    DomainMismatch(usize, usize, usize, usize),
    #[error("pixel ({x}, {y}) outside {width}x{height} domain")]
    OutOfDomain {
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },
    #[error("otsu threshold undefined: all values are equal")]
    DegenerateThreshold,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("marker file line {line}: {message}")]
    MarkerSyntax { line: usize, message: String },
    #[error("marker id {id} used by more than one marker in image {image}")]
    DuplicateMarkerId { image: String, id: u32 },
    #[error("no marker pixels available{0}")]
    EmptyMarkers(String),
    #[error("unknown image id {0}")]
    UnknownImage(String),
    #[error("invalid channel label {0} (expected 1 or 2)")]
    InvalidLabel(u8),
    #[error("no channels carry label {0}")]
    MissingLabel(u8),
    #[error("unknown decoder `{0}` (expected ts, at, lt, pb, mb, lm or bp)")]
    UnknownDecoder(String),
    #[error("block {block} out of range 1..={blocks}")]
    BlockOutOfRange { block: usize, blocks: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("model format error: {0}")]
    Model(String),
    #[error("selection error: {0}")]
    Selection(String),
    #[error(transparent)]
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
