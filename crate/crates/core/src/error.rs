use std::path::PathBuf;

/// Errors produced anywhere in the testbed.
///
/// The variants line up with the CLI's exit codes: configuration problems,
/// bad input data, malformed persisted files and undefined metrics are all
/// reported separately.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("metric undefined: {0}")]
    Metric(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
