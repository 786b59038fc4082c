use thiserror::Error;

/// Errors shared across the tensor, Pauli, MPS/MPO, solver and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("contraction error: axis pair ({a_axis}, {b_axis}) has extents {a_extent} vs {b_extent}")]
    ContractAxes {
        a_axis: usize,
        b_axis: usize,
        a_extent: usize,
        b_extent: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("operator is not Hermitian within tolerance {tol}: defect {defect}")]
    NotHermitian { defect: f64, tol: f64 },

    #[error("resource cap exceeded: {what} reached {got}, cap is {cap}")]
    ResourceCap {
        what: &'static str,
        got: usize,
        cap: usize,
    },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("solver diverged: {0}")]
    SolverDiverged(String),

    #[error("optimizer failure: {0}")]
    OptimizerFailure(String),

    #[error("experiment stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
