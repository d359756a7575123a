use std::path::PathBuf;

/// Errors produced anywhere in the registration pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unreadable file {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported or undecodable image {path}: {detail}")]
    UnsupportedImage { path: PathBuf, detail: String },
    #[error("cannot write {path}: {detail}")]
    UnwritablePath { path: PathBuf, detail: String },
    #[error("zero-dimension image")]
    ZeroDimension,
    #[error("image too small: need at least {min}x{min}, got {width}x{height}")]
    ImageTooSmall {
        min: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid sigma {0}: must be finite and non-negative")]
    InvalidSigma(f64),
    #[error("non-finite coordinates ({0}, {1})")]
    NonFiniteCoordinates(f64, f64),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid parameter {name}: {detail}")]
    InvalidParameter { name: &'static str, detail: String },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("too few matches: need {needed}, got {got}")]
    TooFewMatches { needed: usize, got: usize },
    #[error("no model with sufficient inliers")]
    NoConsensus,
    #[error("degenerate point configuration")]
    DegenerateConfiguration,
    #[error("non-invertible transform")]
    NonInvertibleTransform,
    #[error("point at infinity")]
    PointAtInfinity,
    #[error("CMR is meaningless: no established matches (N = 0)")]
    MeaninglessCmr,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("malformed ground truth {path}: {detail}")]
    MalformedGroundTruth { path: PathBuf, detail: String },
    #[error("config error for key `{key}`: {detail}")]
    Config { key: String, detail: String },
    #[error("pipeline stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
