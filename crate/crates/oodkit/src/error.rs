use thiserror::Error;

/// Unified error type for the toolkit.
///
/// Every failing operation names the violated invariant. [`OodError::exit_code`]
/// maps errors onto the CLI exit-code contract: 2 for I/O, 3 for validation,
/// 4 for numeric failures.
#[derive(Debug, Error)]
pub enum OodError {
    #[error("non-finite input in {0}")]
    NonFiniteInput(&'static str),

    #[error("empty input in {0}")]
    EmptyInput(&'static str),

    #[error("percentile {0} outside [0, 100]")]
    BadPercentile(f64),

    #[error("temperature must be positive and finite, got {0}")]
    NonPositiveTemperature(f64),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("bad parameter: {0}")]
    BadParameter(String),

    #[error("degenerate split in {0}: no activations above the percentile threshold")]
    DegenerateSplit(&'static str),

    #[error("zero vector passed to {0}")]
    ZeroVector(&'static str),

    #[error("activation set carries no class labels")]
    MissingLabels,

    #[error("activation set carries no distribution tag")]
    MissingTag,

    #[error("degenerate score set: {0}")]
    DegenerateSet(&'static str),

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,

    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),

    #[error("subspace dimension {k} invalid for feature dimension {d}")]
    BadSubspaceDim { k: usize, d: usize },

    #[error("layer index {index} out of range for network with {n_layers} layers")]
    BadLayerIndex { index: usize, n_layers: usize },

    #[error("profile built for dimension {expected} does not match layer {layer} output dimension {got}")]
    ProfileLayerMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("payload of {n} x {d} samples exceeds the addressable dump size")]
    DimensionOverflow { n: usize, d: usize },

    #[error("bad magic bytes {0:?}, expected \"OODA\"")]
    BadMagic([u8; 4]),

    #[error("unsupported dump version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated payload: declared {expected} bytes, found {got}")]
    TruncatedPayload { expected: u64, got: u64 },

    #[error("{0} trailing bytes after declared payload")]
    TrailingBytes(u64),

    #[error("non-finite payload value at element {0}")]
    NonFinitePayload(usize),

    #[error("ragged csv row at line {line}: expected {expected} cells, got {got}")]
    RaggedRows {
        line: usize,
        expected: usize,
        got: usize,
    },

    #[error("non-numeric csv cell at line {line}, column {column}")]
    NonNumericCell { line: usize, column: usize },

    #[error("bad config key `{key}`: {reason}")]
    BadConfig { key: String, reason: String },
}

impl OodError {
    /// CLI exit code for this error: 2 = I/O, 3 = validation, 4 = numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            OodError::Io(_) => 2,
            OodError::SingularCovariance | OodError::EigenFailure(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, OodError>;
