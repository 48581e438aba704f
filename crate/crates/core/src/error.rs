use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ingest
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}: {reason}")]
    UnparseableRow { row: usize, reason: String },
    #[error("input contains no data rows")]
    EmptyFile,
    #[error("preprocessing removed every record")]
    AllRecordsRemoved,
    #[error("split leaves the {side} set empty")]
    EmptySplit { side: &'static str },

    // numerics
    #[error("{0}")]
    DomainError(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("sample contains non-positive value {0}")]
    NonPositiveValue(f64),
    #[error("sample is empty")]
    EmptySample,
    #[error("sample too small: need at least {needed}, got {got}")]
    SampleTooSmall { needed: usize, got: usize },
    #[error("intensity has a singular point at t = {0}")]
    SingularPoint(f64),
    #[error("cumulative intensity cannot be inverted at level {0}")]
    NotInvertible(f64),
    #[error("Levenberg-Marquardt did not converge after {iterations} iterations (residual sum of squares {residual}, gradient norm {gradient_norm})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        gradient_norm: f64,
    },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("{failed} of {total} secondary fits failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from the numerical layer rather than from input
    /// or configuration problems.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DegenerateSample(_)
                | Error::SingularPoint(_)
                | Error::NotInvertible(_)
                | Error::NonConvergence { .. }
                | Error::InvalidModel(_)
                | Error::TooManyFailures { .. }
                | Error::AllRecordsRemoved
                | Error::EmptySplit { .. }
                | Error::SampleTooSmall { .. }
                | Error::NonPositiveValue(_)
                | Error::EmptySample
                | Error::DomainError(_)
        )
    }
}
