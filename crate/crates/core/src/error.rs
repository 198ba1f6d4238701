use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite log-likelihood term at data index {index}")]
    NonFiniteLogLikelihood { index: usize },

    #[error("non-finite parameters after EM iteration {iteration}")]
    NonFiniteParameters { iteration: usize },

    #[error("gating Hessian is singular after ridge regularisation")]
    SingularHessian,

    #[error("minimiser did not converge after {evaluations} evaluations (best value {best_value})")]
    NotConverged {
        best_value: f64,
        best_point: Vec<f64>,
        evaluations: usize,
    },

    #[error("fit for {k} experts failed: {source}")]
    FitFailed {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("study aborted: {skipped} of {total} replications failed")]
    TooManyFailures { skipped: usize, total: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported format version {found:?} (supported major version {supported})")]
    UnsupportedVersion { found: String, supported: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFiniteLogLikelihood { .. }
            | Error::NonFiniteParameters { .. }
            | Error::SingularHessian
            | Error::NotConverged { .. }
            | Error::TooManyFailures { .. } => true,
            Error::FitFailed { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
