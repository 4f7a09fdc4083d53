use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("already grayscale")]
    AlreadyGrayscale,

    #[error("expected a single-channel image, got {0} channels")]
    NotGrayscale(u8),

    #[error("threshold {0} outside [0, 255]")]
    ThresholdOutOfRange(i64),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("png decode error: {0}")]
    Png(#[from] png::DecodingError),

    #[error("png encode error: {0}")]
    PngEncode(#[from] png::EncodingError),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("height label mismatch: profile is {profile:?}, image is {image:?}")]
    HeightMismatch { profile: String, image: String },

    #[error("invalid thresholds: {0}")]
    Thresholds(String),

    #[error("negative area {0} mm²")]
    NegativeArea(f64),

    #[error("unknown imprint shape {0:?}")]
    UnknownShape(String),

    #[error("unknown size class {0:?}")]
    UnknownSizeClass(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("duplicate image path {0:?}")]
    DuplicatePath(String),

    #[error("class {class:?} has {available} records, {requested} requested for test")]
    SplitTooLarge {
        class: String,
        requested: usize,
        available: usize,
    },

    #[error("invalid split: {0}")]
    Split(String),

    #[error("invalid training config: {0}")]
    Config(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("empty {0} set")]
    EmptySet(&'static str),

    #[error("line {line}: {message}")]
    Line { line: u64, message: String },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("unknown class {0:?}")]
    UnknownClass(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

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
