use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("matrix has a negative entry at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize },

    #[error("solver blew up at t = {time}: state is no longer finite")]
    SolverBlowup { time: f64 },

    #[error("solve did not converge: residual {residual:e} after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("stability hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: expected {expected} {what}, found {found}")]
    LengthMismatch {
        path: PathBuf,
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{path}: {msg}")]
    Validation { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn file(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::File { path: path.to_path_buf(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
