use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("embedding failed: most negative eigenvalue {min_eigenvalue:e} (largest {max_eigenvalue:e}) at embedding size {size}")]
    EmbeddingFailed {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
        size: usize,
    },

    #[error("non-positive coefficient value {value:e} in cell {cell}")]
    NonPositiveCoefficient { cell: usize, value: f64 },

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("zero target norm in row {0}")]
    ZeroTargetNorm(usize),

    #[error("loss became NaN in epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("realization {index}: {source}")]
    Realization {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::EmbeddingFailed { .. }
            | Error::NonPositiveCoefficient { .. }
            | Error::NotConverged { .. }
            | Error::Singular(_)
            | Error::ZeroTargetNorm(_)
            | Error::NanLoss { .. } => true,
            Error::Realization { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
