use thiserror::Error;

/// Errors raised by the numerics, estimators and controllers in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("{func}: argument out of domain ({detail})")]
    Domain { func: &'static str, detail: String },

    /// An iterative routine hit its iteration cap.
    #[error("{routine} did not converge within {iterations} iterations")]
    NoConvergence {
        routine: &'static str,
        iterations: usize,
    },

    /// A configuration value violates its invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A quantity was requested at a point where it is not defined
    /// (for example gamma-derivatives at gamma = 0).
    #[error("unsupported evaluation point: {0}")]
    UnsupportedPoint(String),

    /// The policy has no success mass, so success-conditioned moments are undefined.
    #[error("degenerate policy: {0}")]
    Degenerate(String),

    /// A collection that must be nonempty was empty.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Reward or count data could not be grouped consistently.
    #[error("ingestion error: {0}")]
    Ingest(String),

    /// A line of an input file could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        func,
        detail: detail.into(),
    }
}
