use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Matrix or vector dimensions do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A factorization (Cholesky, eigen, solve) could not be carried out.
    #[error("factorization failed: {0}")]
    Factorization(String),

    /// The minimizer produced a non-finite objective value.
    #[error("solver diverged at iteration {iteration}: objective {value}")]
    Diverged {
        iteration: usize,
        value: f64,
        /// Best-so-far objective trace up to the failure.
        trace: Vec<f64>,
    },

    /// Malformed input file or configuration.
    #[error("invalid input{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<u64>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn parse(line: Option<u64>, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
