use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LcnError>;

#[derive(Debug, Error)]
pub enum LcnError {
    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A table head only has pattern semantics under exact ReLU.
    #[error("table head requires lambda = 1, got {0}")]
    TableNeedsHardActivation(f64),

    #[error("tree conversion requires depth <= {cap}, got {depth}")]
    DepthOverCap { depth: usize, cap: usize },

    #[error("operation `{op}` does not support the {variant} variant")]
    UnsupportedVariant { op: &'static str, variant: String },

    #[error("training diverged at epoch {epoch}, batch {batch}{}", stage.map(|s| format!(" (ensemble stage {s})")).unwrap_or_default())]
    Divergence {
        epoch: usize,
        batch: usize,
        stage: Option<usize>,
    },

    #[error("data error in {}: {message}", path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "input".into()))]
    Data {
        path: Option<PathBuf>,
        message: String,
    },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl LcnError {
    pub(crate) fn data(path: Option<&std::path::Path>, message: impl Into<String>) -> Self {
        LcnError::Data {
            path: path.map(|p| p.to_path_buf()),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        LcnError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
