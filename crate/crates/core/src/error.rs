use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at data row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("utility spec error: {0}")]
    Spec(String),

    #[error("network shape mismatch: {0}")]
    Shape(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("indicator error: {0}")]
    Indicator(String),

    #[error("regression error: rank-deficient design, dependent columns {dependent:?}")]
    RankDeficient { dependent: Vec<String> },

    #[error("probe error: {0}")]
    Probe(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Short machine-readable tag used in CLI error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::Parse { .. } => "parse",
            Error::Data(_) => "data",
            Error::Argument(_) => "argument",
            Error::Spec(_) => "spec",
            Error::Shape(_) => "shape",
            Error::Training(_) => "training",
            Error::Diverged { .. } => "diverged",
            Error::Indicator(_) => "indicator",
            Error::RankDeficient { .. } => "regression",
            Error::Probe(_) => "probe",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Serde(_) => "serialization",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
