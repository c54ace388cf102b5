use thiserror::Error;

/// Errors raised anywhere in the distillation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("feature index {index} out of range for points with {len} values")]
    FeatureOutOfRange { index: usize, len: usize },

    #[error("shapelet {0} is not present in the ensemble pool")]
    UnknownShapelet(usize),

    #[error("shapelet of length {shapelet_len} does not fit a series of length {series_len}")]
    ShapeletTooLong { shapelet_len: usize, series_len: usize },

    #[error("tree {tree_id} is corrupted: {satisfied} rules satisfied by one point")]
    CorruptedTree { tree_id: usize, satisfied: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("task mismatch: expected {expected}, found {found}")]
    TaskMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("selector kind not supported here: {0}")]
    UnsupportedSelector(String),

    #[error("empty rule catalog")]
    EmptyCatalog,

    #[error("no partition with at most {ell} rules exists; the smallest feasible list has {minimum} rules")]
    InfeasibleCardinality { ell: usize, minimum: usize },

    #[error("the coverage columns admit no exact partition")]
    InfeasibleCover,

    #[error("solver budget exhausted before any feasible partition was found")]
    NoIncumbent,

    #[error("warm start rejected: {0}")]
    InvalidWarmStart(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("unsupported format version {0}")]
    FormatVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
