use thiserror::Error;

/// Errors raised by the analysis library.
///
/// Variants split into data problems (ingest, malformed input) and analysis
/// failures (a numerical procedure could not produce a result) so callers can
/// map them onto distinct exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("no data rows")]
    NoData,

    #[error("csv: {0}")]
    Csv(String),

    #[error("timestamps are not strictly increasing at line {line}")]
    Unsorted { line: u64 },

    #[error("gap of {missing} grid steps from {from} to {to} exceeds max_gap {max_gap}")]
    GapTooLarge {
        from: String,
        to: String,
        missing: usize,
        max_gap: usize,
    },

    #[error("period '{name}': {message}")]
    Period { name: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("series too short: need at least {needed}, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("optimizer did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("gamma(w) is not monotonic at beta = {beta}; raise beta or refine the order grid")]
    NonMonotonic { beta: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

impl Error {
    /// True for errors caused by the input data rather than by an analysis step.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MalformedRow { .. }
                | Error::NoData
                | Error::Csv(_)
                | Error::Unsorted { .. }
                | Error::GapTooLarge { .. }
                | Error::Period { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
