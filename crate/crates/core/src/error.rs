use std::path::PathBuf;

/// Errors raised anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: dimension mismatch: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("parse error in {file} at record {record}: {detail}")]
    Parse {
        file: String,
        record: usize,
        detail: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("training diverged at epoch {epoch}, step {step}: {snapshot}")]
    Diverged {
        epoch: usize,
        step: usize,
        snapshot: String,
    },

    #[error("lasso did not converge after {iterations} sweeps (max coordinate change {max_change:e}, residual {residual:e})")]
    NotConverged {
        iterations: usize,
        max_change: f64,
        residual: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
