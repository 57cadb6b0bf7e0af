use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, field {field}: {message}")]
    Parse {
        line: usize,
        field: usize,
        message: String,
    },

    #[error("training error: {0}")]
    Training(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("time series error: {0}")]
    TimeSeries(String),

    #[error("model fit did not converge after {iterations} iterations (best css {best_css})")]
    FitNonConvergence { iterations: usize, best_css: f64 },

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("format version mismatch: {0}")]
    VersionMismatch(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
