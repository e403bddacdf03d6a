use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("non-monotone timestamps at row {row}")]
    NonMonotoneTimestamps { row: usize },
    #[error("irregular sampling at row {row}: gap {gap_ns} ns, expected {expected_ns} ns")]
    IrregularSampling {
        row: usize,
        gap_ns: i64,
        expected_ns: i64,
    },
    #[error("bad timestamp {value:?} at row {row}")]
    BadTimestamp { row: usize, value: String },
    #[error("bad value {value:?} at row {row}, column {column}")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("missing value at row {row}, column {column}")]
    MissingValue { row: usize, column: String },
    #[error("column {0} is empty")]
    EmptyColumn(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("quantile fit diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("unstable VAR system: spectral radius {radius:.6}")]
    Unstable { radius: f64 },
    #[error("non-finite projection for variable {variable} at step {step}")]
    NonFiniteProjection { variable: String, step: usize },
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("search failed in generation {generation} on genome {genome:?}: {source}")]
    Search {
        generation: usize,
        genome: Vec<u8>,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
