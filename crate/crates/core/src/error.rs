use thiserror::Error;

/// Errors produced by the toolkit's core operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("incompatible rates: source {source_hz} Hz is not an integer multiple of target {target_hz} Hz")]
    IncompatibleRates { source_hz: f64, target_hz: f64 },

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("dataset too small: need at least {min} items, got {got}")]
    DatasetTooSmall { min: usize, got: usize },

    #[error("unknown scenario kind: {0:?}")]
    UnknownScenarioKind(String),

    #[error("anchor required: history is empty")]
    AnchorRequired,

    #[error("invalid raster config: {0}")]
    InvalidRasterConfig(String),

    #[error("filter divergence: {0}")]
    FilterDivergence(String),

    #[error("singular innovation covariance")]
    SingularInnovation,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("length mismatch: predicted {pred} steps, ground truth {gt} steps")]
    LengthMismatch { pred: usize, gt: usize },

    #[error("divergence at step {step}: loss is not finite")]
    Divergence { step: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("missing prediction for instance {0}")]
    MissingPrediction(usize),

    #[error("duplicate method tag: {0}")]
    DuplicateMethod(String),

    #[error("malformed record at line {line}: {msg}")]
    MalformedRecord { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
