use thiserror::Error;

/// Errors produced by the rank aggregation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain violation at index {index}: {value} is outside the {domain} domain")]
    Domain {
        index: usize,
        value: f64,
        domain: &'static str,
    },

    #[error("vector is not on the probability simplex (sum = {sum})")]
    NotOnSimplex { sum: f64 },

    #[error("natural parameter {value} at index {index} exceeds the cap of {cap}")]
    NaturalParamOverflow { index: usize, value: f64, cap: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {what} at ({row}, {col})")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("invalid ordering: {0}")]
    InvalidOrdering(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("inconsistent divergence spec: {0}")]
    InconsistentSpec(String),

    #[error("iterates diverged after {iteration} iterations: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Wraps the error with a description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips any context layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait ResultExt<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| e.context(ctx()))
    }
}
