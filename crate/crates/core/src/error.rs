use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the audit pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected:?}, got {actual:?}")]
    InputShape { expected: Vec<usize>, actual: Vec<usize> },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("index out of range: {what} {index} (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("trace does not belong to this network: {0}")]
    Consistency(String),
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("layer {0} has no parameters")]
    ParameterlessLayer(usize),
    #[error("architecture error: {0}")]
    Architecture(String),
    #[error("model file format error: {0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("not enough images: {0}")]
    Size(String),
    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("model {index}: {source}")]
    SuiteMember {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("coalitions {0} and {1} are fixed by constraints and carry no kernel weight")]
    ConstraintCoalition(usize, usize),
    #[error("singular regression system ({0}); use more samples")]
    Solver(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("no qualifying model pair: {0}")]
    Selection(String),
    #[error("image {id}: {source}")]
    Image {
        id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn for_image(id: impl Into<String>, source: Error) -> Self {
        Error::Image {
            id: id.into(),
            source: Box::new(source),
        }
    }
}
