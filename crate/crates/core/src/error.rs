use thiserror::Error;

/// Errors produced by lidkit.
#[derive(Debug, Error)]
pub enum LidError {
    #[error("empty dimension: {0}")]
    EmptyDimension(&'static str),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("insufficient points: need more than {k} points, have {n}")]
    InsufficientPoints { k: usize, n: usize },

    #[error("invalid manifold spec: {0}")]
    Spec(String),

    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("missing capability: {0}")]
    Capability(String),

    #[error("parameterization mismatch: {0}")]
    Parameterization(String),

    #[error("non-finite value during evaluation: {0}")]
    Evaluation(String),

    #[error("training diverged at batch {batch}: loss {loss}")]
    TrainingDiverged { batch: usize, loss: f64 },

    #[error("degenerate neighborhood at point {0}")]
    DegenerateNeighborhood(usize),

    #[error("estimation failed at point {index}: {source}")]
    AtPoint {
        index: usize,
        #[source]
        source: Box<LidError>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LidError>;
