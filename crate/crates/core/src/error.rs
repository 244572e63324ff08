use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = NgnnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NgnnError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op} expects a scalar (1x1) tensor, got {rows}x{cols}")]
    NotScalar {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("node id {id} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { id: usize, num_nodes: usize },

    #[error("invalid ngnn spec {spec:?} at byte {position}: {reason}")]
    SpecParse {
        spec: String,
        position: usize,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("{0} is undefined on empty input")]
    Empty(&'static str),

    #[error("gcn layer requires a normalized graph or block")]
    MissingNormalization,

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NgnnError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        NgnnError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NgnnError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        NgnnError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user input (configs, spec strings, files)
    /// rather than by a failure while running.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            NgnnError::SpecParse { .. } | NgnnError::Config(_) | NgnnError::Json(_)
        )
    }
}
