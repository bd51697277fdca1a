use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Why a fetch did not produce a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchFailure {
    NotFound,
    Status(u16),
    Network(String),
}

impl fmt::Display for FetchFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FetchFailure::NotFound => f.write_str("not found (HTTP 404)"),
            FetchFailure::Status(code) => write!(f, "HTTP status {code}"),
            FetchFailure::Network(msg) => write!(f, "network error: {msg}"),
        }
    }
}

/// Problems with a synthetic source specification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpecProblem {
    Invalid(String),
    Reducible,
    Periodic(usize),
    NoStationary,
    ZeroVariance,
}

impl fmt::Display for SpecProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecProblem::Invalid(msg) => f.write_str(msg),
            SpecProblem::Reducible => f.write_str("transition matrix is reducible"),
            SpecProblem::Periodic(p) => write!(f, "transition matrix is periodic (period {p})"),
            SpecProblem::NoStationary => {
                f.write_str("power iteration did not converge to a stationary distribution")
            }
            SpecProblem::ZeroVariance => f.write_str("encoded process has zero variance"),
        }
    }
}

/// Coarse error classes, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("fetching {url} failed: {failure}")]
    Fetch { url: String, failure: FetchFailure },

    #[error("{0} is not valid UTF-8")]
    Encoding(String),

    #[error("invalid clean rule {pattern:?}: {message}")]
    Rule { pattern: String, message: String },

    #[error("parameter out of range: {0}")]
    Param(String),

    #[error("malformed embedding file at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("no token of the series is covered by the embedding table")]
    EmptySeries,

    #[error("invalid series state: {0}")]
    State(String),

    #[error("series has zero variance")]
    DegenerateSeries,

    #[error("no positive autocorrelation value in curve")]
    AllNonPositive,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("autocorrelation is exactly zero at lag {0}")]
    ZeroDenominator(usize),

    #[error("invalid source specification: {0}")]
    Spec(SpecProblem),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Fetch { .. } => "FetchError",
            Error::Encoding(_) => "EncodingError",
            Error::Rule { .. } => "RuleError",
            Error::Param(_) => "ParamError",
            Error::Format { .. } => "FormatError",
            Error::EmptySeries => "EmptySeriesError",
            Error::State(_) => "StateError",
            Error::DegenerateSeries => "DegenerateSeriesError",
            Error::AllNonPositive => "AllNonPositiveError",
            Error::InsufficientData(_) => "InsufficientDataError",
            Error::ZeroDenominator(_) => "ZeroDenominatorError",
            Error::Spec(_) => "SpecError",
            Error::FileNotFound(_) => "FileNotFound",
            Error::Parse(_) => "ParseError",
            Error::Io(_) => "IoError",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Param(_) => ErrorClass::Usage,
            Error::DegenerateSeries
            | Error::AllNonPositive
            | Error::InsufficientData(_)
            | Error::ZeroDenominator(_) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn from_io_at(err: std::io::Error, path: &std::path::Path) -> Self {
        if err.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path.to_path_buf())
        } else {
            Error::Io(err)
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Parse(err.to_string())
    }
}
