use crate::series::YearMonth;

/// Errors returned by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A share was zero or negative where a strictly positive value is required.
    #[error("component '{label}' has non-positive value {value}")]
    ZeroComponent { label: String, value: f64 },
    /// A zero observation in an input file, reported with its line.
    #[error("row {row}: component '{label}' is zero (enable zero replacement to keep it)")]
    ZeroObservation { row: usize, label: String },
    /// A share was NaN or infinite.
    #[error("component '{label}' has non-finite value {value}")]
    NonFinite { label: String, value: f64 },
    /// Two compositions (or a composition and a concentration) disagree on
    /// their parts, labels or reference.
    #[error("incompatible compositions: {0}")]
    IncompatibleComposition(String),
    /// Input outside the support of a density.
    #[error("domain error: {0}")]
    Domain(String),
    /// A time index outside the range an operation can evaluate.
    #[error("index {index} out of range: {reason}")]
    OutOfRange { index: usize, reason: String },
    /// Invalid configuration or dimension mismatch.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Not enough observations for the requested fit.
    #[error("insufficient data: need at least {needed} observations, have {have}")]
    InsufficientData { needed: usize, have: usize },
    /// The seasonal-naive forecaster needs a full year of history.
    #[error("insufficient history: origin {origin} needs at least {needed} observations")]
    InsufficientHistory { origin: usize, needed: usize },
    /// OLS design is rank deficient.
    #[error("singular design: collinear columns {columns:?}")]
    SingularDesign { columns: Vec<String> },
    /// Lag-0 residual covariance is not invertible.
    #[error("singular residual covariance")]
    SingularCovariance,
    /// A constant series has no defined autocorrelation.
    #[error("degenerate (constant) series")]
    DegenerateSeries,
    /// The sampler could not start because the target is not finite at the
    /// initial point.
    #[error("non-finite target at initial point of chain {chain}; offending coordinates {coordinates:?}")]
    Initialization { chain: usize, coordinates: Vec<usize> },
    /// Rolling-origin protocol does not fit the data.
    #[error("protocol error at origin {origin}: {reason}")]
    Protocol { origin: YearMonth, reason: String },
    /// Calendar gap in a monthly series.
    #[error("calendar gap: expected {expected} but found {found} at row {row}")]
    Gap { expected: YearMonth, found: YearMonth, row: usize },
    /// Malformed input file.
    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse { row: usize, column: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
